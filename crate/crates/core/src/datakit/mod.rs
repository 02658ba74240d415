//! Task data: formats, vocabulary, tokenization, feature packing and the
//! synthetic domain generator.

pub mod features;
pub mod formats;
pub mod overlap;
pub mod synth;
pub mod tokenize;
pub mod vocab;

pub use features::{align_answer_span, PackingLimits, TokenizedFeature};
pub use formats::{
    parse_conll_ner, parse_corpus, parse_qcls_tsv, parse_squad_json, Answer, NerExample, QaExample,
    QclsDataset, QclsExample, TextCorpus,
};
pub use overlap::vocabulary_overlap;
pub use synth::{generate_synthetic_domain, SyntheticBundle, SyntheticDomainSpec};
pub use tokenize::{pre_tokenize, tokenize_with_offsets};
pub use vocab::{build_vocabulary, Vocabulary};
