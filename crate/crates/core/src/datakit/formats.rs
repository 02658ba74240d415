//! Readers and writers for the four task formats: SQuAD v1.1 JSON, CoNLL
//! token/tag text, question-classification TSV and raw-text corpora.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::tokenize::char_slice;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub char_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<Answer>,
}

impl QaExample {
    /// Checks that every answer is the exact context substring at its offset.
    pub fn check_answers(&self) -> std::result::Result<(), String> {
        for a in &self.answers {
            let end = a.char_start + a.text.chars().count();
            if char_slice(&self.context, a.char_start, end) != a.text {
                return Err(format!(
                    "answer {:?} does not occur at character {}",
                    a.text, a.char_start
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerExample {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QclsExample {
    pub question: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub name: String,
    pub documents: Vec<String>,
}

impl TextCorpus {
    pub fn new(name: impl Into<String>, documents: Vec<String>) -> Result<Self> {
        if documents.iter().any(|d| d.trim().is_empty()) {
            return Err(Error::InvalidSpec("corpus contains an empty document".into()));
        }
        Ok(Self {
            name: name.into(),
            documents,
        })
    }
}

// ---- SQuAD ---------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SquadFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    data: Vec<SquadArticle>,
}

#[derive(Serialize, Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Serialize, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Serialize, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Serialize, Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// An example rejected by validation; the rest of the file still loads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvalidExample {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SquadDataset {
    pub examples: Vec<QaExample>,
    pub invalid: Vec<InvalidExample>,
}

pub fn parse_squad_json(bytes: &[u8]) -> Result<SquadDataset> {
    let file: SquadFile = serde_json::from_slice(bytes).map_err(|e| Error::json(bytes, &e))?;
    let mut out = SquadDataset::default();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let example = QaExample {
                    id: qa.id,
                    context: para.context.clone(),
                    question: qa.question,
                    answers: qa
                        .answers
                        .into_iter()
                        .map(|a| Answer {
                            text: a.text,
                            char_start: a.answer_start,
                        })
                        .collect(),
                };
                match example.check_answers() {
                    Ok(()) => out.examples.push(example),
                    Err(reason) => out.invalid.push(InvalidExample {
                        id: example.id,
                        reason,
                    }),
                }
            }
        }
    }
    Ok(out)
}

/// Writes examples as SQuAD v1.1 JSON. Consecutive examples sharing a
/// context become one paragraph.
pub fn write_squad_json(examples: &[QaExample], title: &str) -> Vec<u8> {
    let mut paragraphs: Vec<SquadParagraph> = Vec::new();
    for ex in examples {
        let qa = SquadQa {
            id: ex.id.clone(),
            question: ex.question.clone(),
            answers: ex
                .answers
                .iter()
                .map(|a| SquadAnswer {
                    text: a.text.clone(),
                    answer_start: a.char_start,
                })
                .collect(),
        };
        match paragraphs.last_mut() {
            Some(p) if p.context == ex.context => p.qas.push(qa),
            _ => paragraphs.push(SquadParagraph {
                context: ex.context.clone(),
                qas: vec![qa],
            }),
        }
    }
    let file = SquadFile {
        version: Some("1.1".into()),
        data: vec![SquadArticle {
            title: title.into(),
            paragraphs,
        }],
    };
    serde_json::to_vec(&file).expect("SQuAD structures serialize")
}

// ---- CoNLL ---------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct ConllDataset {
    pub examples: Vec<NerExample>,
    /// Number of `I-X` tags rewritten to `B-X`.
    pub repairs: usize,
}

/// Splits a BIO tag into its prefix and entity type.
pub fn split_tag(tag: &str) -> Option<(char, &str)> {
    if tag == "O" {
        return Some(('O', ""));
    }
    let (prefix, ty) = tag.split_once('-')?;
    match prefix {
        "B" | "I" if !ty.is_empty() => Some((prefix.chars().next().unwrap(), ty)),
        _ => None,
    }
}

/// Rewrites every `I-X` that does not continue an `X` entity into `B-X`.
/// Returns the number of rewritten tags.
pub fn repair_bio(tags: &mut [String]) -> usize {
    let mut repairs = 0;
    let mut prev_type: Option<String> = None;
    for tag in tags.iter_mut() {
        let Some((prefix, ty)) = split_tag(tag) else {
            prev_type = None;
            continue;
        };
        let ty = ty.to_string();
        match prefix {
            'O' => prev_type = None,
            'I' if prev_type.as_deref() != Some(ty.as_str()) => {
                *tag = format!("B-{ty}");
                repairs += 1;
                prev_type = Some(ty);
            }
            _ => prev_type = Some(ty),
        }
    }
    repairs
}

/// Parses CoNLL text. Each line holds a token and its tag separated by
/// whitespace; the four-column CoNLL-2003 layout is also accepted (token
/// first, NER tag last).
pub fn parse_conll_ner(bytes: &[u8]) -> Result<ConllDataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut out = ConllDataset::default();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, out: &mut ConllDataset| {
        if !tokens.is_empty() {
            out.repairs += repair_bio(tags);
            out.examples.push(NerExample {
                tokens: std::mem::take(tokens),
                tags: std::mem::take(tags),
            });
        }
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut out);
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `token tag`, found {} fields", fields.len()),
            });
        }
        let tag = fields[fields.len() - 1];
        if split_tag(tag).is_none() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("`{tag}` is not a BIO tag"),
            });
        }
        tokens.push(fields[0].to_string());
        tags.push(tag.to_string());
    }
    flush(&mut tokens, &mut tags, &mut out);
    Ok(out)
}

pub fn write_conll(examples: &[NerExample]) -> Vec<u8> {
    let mut out = String::new();
    for ex in examples {
        for (tok, tag) in ex.tokens.iter().zip(&ex.tags) {
            out.push_str(tok);
            out.push(' ');
            out.push_str(tag);
            out.push('\n');
        }
        out.push('\n');
    }
    out.into_bytes()
}

// ---- QCLS ----------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QclsDataset {
    pub examples: Vec<QclsExample>,
    /// Sorted distinct labels; a label's class id is its index here.
    pub inventory: Vec<String>,
}

impl QclsDataset {
    pub fn from_examples(examples: Vec<QclsExample>) -> Self {
        let inventory: BTreeSet<&str> = examples.iter().map(|e| e.label.as_str()).collect();
        let inventory = inventory.into_iter().map(String::from).collect();
        Self {
            examples,
            inventory,
        }
    }

    pub fn class_id(&self, label: &str) -> Option<usize> {
        self.inventory.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }
}

pub fn parse_qcls_tsv(bytes: &[u8]) -> Result<QclsDataset> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        line: 1,
        message: "invalid UTF-8".into(),
    })?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(q), Some(label), None) if !label.is_empty() => examples.push(QclsExample {
                question: q.to_string(),
                label: label.to_string(),
            }),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected `question<TAB>label`".into(),
                })
            }
        }
    }
    Ok(QclsDataset::from_examples(examples))
}

pub fn write_qcls_tsv(examples: &[QclsExample]) -> Vec<u8> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&ex.question);
        out.push('\t');
        out.push_str(&ex.label);
        out.push('\n');
    }
    out.into_bytes()
}

// ---- raw text ------------------------------------------------------------

/// One document per non-empty line.
pub fn parse_corpus(name: &str, bytes: &[u8]) -> Result<TextCorpus> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        line: 1,
        message: "invalid UTF-8".into(),
    })?;
    let documents = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect();
    TextCorpus::new(name, documents)
}

pub fn write_corpus(corpus: &TextCorpus) -> Vec<u8> {
    let mut out = String::new();
    for doc in &corpus.documents {
        out.push_str(doc);
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn squad_doc(context: &str, answer: &str, start: usize) -> String {
        serde_json::json!({
            "version": "1.1",
            "data": [{
                "title": "t",
                "paragraphs": [{
                    "context": context,
                    "qas": [{
                        "id": "q1",
                        "question": "What is hemophilia?",
                        "answers": [{"text": answer, "answer_start": start}]
                    }]
                }]
            }]
        })
        .to_string()
    }

    const HEMOPHILIA: &str = "Hemophilia is a bleeding disorder characterized by low levels of clotting factor proteins.";
    const HEMO_ANSWER: &str = "a bleeding disorder characterized by low levels of clotting factor proteins.";

    #[test]
    fn squad_valid_example() {
        let doc = squad_doc(HEMOPHILIA, HEMO_ANSWER, 14);
        let parsed = parse_squad_json(doc.as_bytes()).unwrap();
        assert!(parsed.invalid.is_empty());
        assert_eq!(parsed.examples.len(), 1);
        assert_eq!(parsed.examples[0].answers.len(), 1);
        assert_eq!(parsed.examples[0].question, "What is hemophilia?");
    }

    #[test]
    fn squad_empty_data() {
        let parsed = parse_squad_json(br#"{"data": []}"#).unwrap();
        assert!(parsed.examples.is_empty());
    }

    #[test]
    fn squad_shifted_offset_reported_by_id() {
        let doc = squad_doc(HEMOPHILIA, HEMO_ANSWER, 15);
        let parsed = parse_squad_json(doc.as_bytes()).unwrap();
        assert!(parsed.examples.is_empty());
        assert_eq!(parsed.invalid.len(), 1);
        assert_eq!(parsed.invalid[0].id, "q1");
    }

    #[test]
    fn squad_malformed_reports_offset() {
        let err = parse_squad_json(b"{\"data\": [\n  }").unwrap_err();
        match err {
            Error::Json { offset, .. } => assert!(offset > 0 && offset <= 14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn squad_offsets_are_characters() {
        let doc = squad_doc("naïve café", "café", 6);
        let parsed = parse_squad_json(doc.as_bytes()).unwrap();
        assert_eq!(parsed.examples.len(), 1);
    }

    #[test]
    fn conll_single_token() {
        let parsed = parse_conll_ner(b"Rwanda B-LOC\n\n").unwrap();
        assert_eq!(
            parsed.examples,
            vec![NerExample {
                tokens: vec!["Rwanda".into()],
                tags: vec!["B-LOC".into()],
            }]
        );
        assert_eq!(parsed.repairs, 0);
    }

    #[test]
    fn conll_empty_and_docstart() {
        assert!(parse_conll_ner(b"").unwrap().examples.is_empty());
        let parsed = parse_conll_ner(b"-DOCSTART- -X- O O\n\nEU NNP B-NP B-ORG\n").unwrap();
        assert_eq!(parsed.examples.len(), 1);
        assert_eq!(parsed.examples[0].tags, ["B-ORG"]);
    }

    #[test]
    fn conll_repairs_orphan_inside_tag() {
        let parsed = parse_conll_ner(b"the O\nman I-PER\n").unwrap();
        assert_eq!(parsed.examples[0].tags, ["O", "B-PER"]);
        assert_eq!(parsed.repairs, 1);
    }

    #[test]
    fn conll_repairs_type_switch() {
        let mut tags: Vec<String> = ["B-PER", "I-LOC", "I-LOC"].map(String::from).to_vec();
        assert_eq!(repair_bio(&mut tags), 1);
        assert_eq!(tags, ["B-PER", "B-LOC", "I-LOC"]);
    }

    #[test]
    fn conll_bad_field_count_names_line() {
        let err = parse_conll_ner(b"a O\nb c O\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = parse_conll_ner(b"a X-PER\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn qcls_sorted_inventory() {
        let parsed = parse_qcls_tsv(b"how does it spread\ttransmission\nwhere did it start\torigin\n").unwrap();
        assert_eq!(parsed.inventory, ["origin", "transmission"]);
        assert_eq!(parsed.class_id("origin"), Some(0));
        assert_eq!(parsed.class_id("transmission"), Some(1));
    }

    #[test]
    fn qcls_empty_and_duplicates() {
        assert_eq!(parse_qcls_tsv(b"").unwrap(), QclsDataset::default());
        let parsed = parse_qcls_tsv(b"q\ta\nq\ta\n").unwrap();
        assert_eq!(parsed.examples.len(), 2);
    }

    #[test]
    fn qcls_missing_tab_names_line() {
        let err = parse_qcls_tsv(b"q\ta\nno tab here\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_qcls_tsv(b"a\tb\tc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn corpus_skips_blank_lines() {
        let c = parse_corpus("news", b"first doc\n\nsecond doc\n").unwrap();
        assert_eq!(c.documents, ["first doc", "second doc"]);
    }

    fn qa_strategy() -> impl Strategy<Value = QaExample> {
        ("[a-z ]{1,30}", "[a-z]{1,8}", 0usize..3, "[a-z ?]{0,20}").prop_map(
            |(pre, ans, n_golds, question)| {
                let context = format!("{pre}{ans} tail");
                let start = pre.chars().count();
                let answers = (0..n_golds.max(1))
                    .map(|_| Answer {
                        text: ans.clone(),
                        char_start: start,
                    })
                    .collect();
                QaExample {
                    id: format!("{pre}-{ans}"),
                    context,
                    question,
                    answers,
                }
            },
        )
    }

    fn ner_strategy() -> impl Strategy<Value = NerExample> {
        prop::collection::vec(
            ("[A-Za-z]{1,6}", prop::sample::select(vec!["O", "B-PER", "I-PER", "B-LOC"])),
            1..8,
        )
        .prop_map(|pairs| {
            let (tokens, tags): (Vec<String>, Vec<String>) =
                pairs.into_iter().map(|(t, g)| (t, g.to_string())).unzip();
            let mut ex = NerExample { tokens, tags };
            repair_bio(&mut ex.tags);
            ex
        })
    }

    proptest! {
        #[test]
        fn squad_roundtrip(examples in prop::collection::vec(qa_strategy(), 0..6)) {
            let bytes = write_squad_json(&examples, "t");
            let parsed = parse_squad_json(&bytes).unwrap();
            prop_assert!(parsed.invalid.is_empty());
            prop_assert_eq!(parsed.examples, examples);
        }

        #[test]
        fn conll_roundtrip(examples in prop::collection::vec(ner_strategy(), 0..6)) {
            let parsed = parse_conll_ner(&write_conll(&examples)).unwrap();
            prop_assert_eq!(parsed.repairs, 0);
            prop_assert_eq!(parsed.examples, examples);
        }

        #[test]
        fn qcls_roundtrip(pairs in prop::collection::vec(("[a-z ?]{0,20}", "[a-z]{1,6}"), 0..8)) {
            let examples: Vec<QclsExample> = pairs
                .into_iter()
                .map(|(question, label)| QclsExample { question, label })
                .collect();
            let parsed = parse_qcls_tsv(&write_qcls_tsv(&examples)).unwrap();
            prop_assert_eq!(parsed, QclsDataset::from_examples(examples));
        }
    }
}
