//! Packing task examples into model inputs.
//!
//! QA inputs are `[CLS] question [SEP] context [SEP]`; single-text tasks are
//! `[CLS] text [SEP]`. Features are stored unpadded; batching pads at the tail.

use std::ops::Range;

use super::formats::{NerExample, QaExample, QclsDataset, TextCorpus};
use super::tokenize::{pre_tokenize, tokenize_with_offsets};
use super::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Span extraction; the target is `TokenizedFeature::answer_span`.
    Span,
    Tags(Vec<u32>),
    Class(u32),
    /// Filled in by masking; `None` marks unsupervised positions.
    Masked(Vec<Option<u32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedFeature {
    pub input_ids: Vec<u32>,
    pub question: Range<usize>,
    pub context: Range<usize>,
    /// Character offsets of each context token in the original context.
    pub char_offsets: Vec<(usize, usize)>,
    /// Packed-sequence indices `(start, end)`, inclusive.
    pub answer_span: Option<(usize, usize)>,
    pub labels: Labels,
}

impl TokenizedFeature {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }
}

/// Smallest token range covering the non-whitespace part of the character
/// range `[char_start, char_end)`. Indices are into `offsets`.
pub fn align_answer_span(
    context: &str,
    char_start: usize,
    char_end: usize,
    offsets: &[(usize, usize)],
) -> Option<(usize, usize)> {
    let chars: Vec<char> = context.chars().collect();
    let mut lo = char_start;
    let mut hi = char_end.min(chars.len());
    while lo < hi && chars[lo].is_whitespace() {
        lo += 1;
    }
    while hi > lo && chars[hi - 1].is_whitespace() {
        hi -= 1;
    }
    if lo >= hi {
        return None;
    }
    let first = offsets.iter().position(|&(_, e)| e > lo)?;
    let last = offsets.iter().rposition(|&(s, _)| s < hi)?;
    if first > last || offsets[first].0 > lo || offsets[last].1 < hi {
        return None;
    }
    Some((first, last))
}

#[derive(Debug, Clone, Copy)]
pub struct PackingLimits {
    pub max_len: usize,
    pub max_question: usize,
}

impl PackingLimits {
    pub fn new(max_len: usize) -> Self {
        Self {
            max_len,
            max_question: (max_len.saturating_sub(3) / 2).max(1),
        }
    }
}

/// Packs a QA example. The answer span (from the first gold answer) is
/// absent when the example has no answers or the answer was truncated away.
/// Returns `None` when the context segment would be empty.
pub fn qa_feature(ex: &QaExample, vocab: &Vocabulary, limits: PackingLimits) -> Option<TokenizedFeature> {
    let (mut q_ids, _) = tokenize_with_offsets(&ex.question, vocab);
    q_ids.truncate(limits.max_question);
    let budget = limits.max_len.checked_sub(3 + q_ids.len())?;
    let (mut c_ids, mut offsets) = tokenize_with_offsets(&ex.context, vocab);
    c_ids.truncate(budget);
    offsets.truncate(budget);
    if c_ids.is_empty() {
        return None;
    }
    let mut input_ids = Vec::with_capacity(3 + q_ids.len() + c_ids.len());
    input_ids.push(Vocabulary::CLS);
    input_ids.extend(&q_ids);
    input_ids.push(Vocabulary::SEP);
    let c_start = input_ids.len();
    input_ids.extend(&c_ids);
    input_ids.push(Vocabulary::SEP);
    let answer_span = ex.answers.first().and_then(|a| {
        let end = a.char_start + a.text.chars().count();
        align_answer_span(&ex.context, a.char_start, end, &offsets)
            .map(|(s, e)| (s + c_start, e + c_start))
    });
    Some(TokenizedFeature {
        question: 1..1 + q_ids.len(),
        context: c_start..c_start + c_ids.len(),
        input_ids,
        char_offsets: offsets,
        answer_span,
        labels: Labels::Span,
    })
}

/// Training QA features; examples whose answer cannot be aligned are dropped
/// and counted.
pub fn qa_training_features(
    examples: &[QaExample],
    vocab: &Vocabulary,
    limits: PackingLimits,
) -> (Vec<TokenizedFeature>, usize) {
    let mut dropped = 0;
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        match qa_feature(ex, vocab, limits) {
            Some(f) if f.answer_span.is_some() => out.push(f),
            _ => dropped += 1,
        }
    }
    (out, dropped)
}

fn single_text(ids: impl IntoIterator<Item = u32>, max_len: usize) -> (Vec<u32>, Range<usize>) {
    let mut input_ids = vec![Vocabulary::CLS];
    input_ids.extend(ids.into_iter().take(max_len.saturating_sub(2)));
    let body = 1..input_ids.len();
    input_ids.push(Vocabulary::SEP);
    (input_ids, body)
}

/// Sorted tag inventory of a NER dataset, always containing `O`.
pub fn tag_inventory(examples: &[NerExample]) -> Vec<String> {
    let mut tags: std::collections::BTreeSet<&str> = examples
        .iter()
        .flat_map(|e| e.tags.iter().map(String::as_str))
        .collect();
    tags.insert("O");
    tags.into_iter().map(String::from).collect()
}

/// Packs a NER sentence. Tokens are looked up whole (lowercased); the special
/// positions carry the `O` tag.
pub fn ner_feature(ex: &NerExample, vocab: &Vocabulary, inventory: &[String], max_len: usize) -> TokenizedFeature {
    let tag_id = |t: &str| inventory.iter().position(|x| x == t).unwrap_or(0) as u32;
    let o = tag_id("O");
    let (input_ids, body) = single_text(ex.tokens.iter().map(|t| vocab.id(&t.to_lowercase())), max_len);
    let mut tags = vec![o];
    tags.extend(ex.tags.iter().take(body.len()).map(|t| tag_id(t)));
    tags.push(o);
    TokenizedFeature {
        input_ids,
        question: 0..0,
        context: body,
        char_offsets: Vec::new(),
        answer_span: None,
        labels: Labels::Tags(tags),
    }
}

pub fn qcls_features(data: &QclsDataset, vocab: &Vocabulary, max_len: usize) -> Vec<TokenizedFeature> {
    data.examples
        .iter()
        .map(|ex| {
            let (ids, _) = tokenize_with_offsets(&ex.question, vocab);
            let (input_ids, body) = single_text(ids, max_len);
            let class = data.class_id(&ex.label).expect("label is in inventory") as u32;
            TokenizedFeature {
                input_ids,
                question: body,
                context: 0..0,
                char_offsets: Vec::new(),
                answer_span: None,
                labels: Labels::Class(class),
            }
        })
        .collect()
}

/// Splits each document into `[CLS] chunk [SEP]` sequences.
pub fn mlm_features(corpus: &TextCorpus, vocab: &Vocabulary, max_len: usize) -> Vec<TokenizedFeature> {
    let chunk = max_len.saturating_sub(2).max(1);
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let ids: Vec<u32> = pre_tokenize(doc).iter().map(|t| vocab.id(&t.text)).collect();
        for piece in ids.chunks(chunk) {
            let (input_ids, body) = single_text(piece.iter().copied(), max_len);
            let n = input_ids.len();
            out.push(TokenizedFeature {
                input_ids,
                question: 0..0,
                context: body,
                char_offsets: Vec::new(),
                answer_span: None,
                labels: Labels::Masked(vec![None; n]),
            });
        }
    }
    out
}
