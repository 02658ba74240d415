//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain strings and numbers and returns a JSON string,
//! so the page needs no generated type glue beyond `wasm-bindgen`'s.

use serde::Serialize;
use stagewise::datakit::{generate_synthetic_domain, vocabulary_overlap, SyntheticDomainSpec, TextCorpus};
use stagewise::eval::{exact_match, normalize_answer, token_f1};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct AnswerScore {
    pub normalized_prediction: String,
    /// Per gold answer: normalized text, F1 and EM (0–1).
    pub golds: Vec<GoldScore>,
    pub f1: f64,
    pub exact_match: f64,
}

#[derive(Debug, Serialize)]
pub struct GoldScore {
    pub normalized: String,
    pub f1: f64,
    pub exact_match: f64,
}

/// Scores `prediction` against each non-blank line of `golds`, keeping the
/// best gold per metric.
pub fn score(prediction: &str, golds: &str) -> Result<AnswerScore, String> {
    let golds: Vec<GoldScore> = golds
        .lines()
        .filter(|g| !g.trim().is_empty())
        .map(|g| GoldScore {
            normalized: normalize_answer(g),
            f1: token_f1(prediction, g),
            exact_match: exact_match(prediction, g),
        })
        .collect();
    if golds.is_empty() {
        return Err("give at least one gold answer".into());
    }
    Ok(AnswerScore {
        normalized_prediction: normalize_answer(prediction),
        f1: golds.iter().map(|g| g.f1).fold(0.0, f64::max),
        exact_match: golds.iter().map(|g| g.exact_match).fold(0.0, f64::max),
        golds,
    })
}

#[derive(Debug, Serialize)]
pub struct Overlap {
    pub k: usize,
    pub overlap: f64,
}

/// Top-`k` vocabulary overlap of two texts; blank lines separate documents.
pub fn overlap(a: &str, b: &str, k: usize) -> Result<Overlap, String> {
    let corpus = |name: &str, text: &str| {
        let docs: Vec<String> = text
            .split("\n\n")
            .map(str::trim)
            .filter(|d| !d.is_empty())
            .map(String::from)
            .collect();
        TextCorpus::new(name, docs).map_err(|e| e.to_string())
    };
    let value = vocabulary_overlap(&corpus("a", a)?, &corpus("b", b)?, k).map_err(|e| e.to_string())?;
    Ok(Overlap { k, overlap: value })
}

#[derive(Debug, Serialize)]
pub struct SynthPreview {
    pub seed: u64,
    pub entity_answer_correlation: f64,
    pub generic_overlap: f64,
    pub dev_entity_answer_fraction: f64,
    pub domain_generic_overlap_top50: f64,
    pub ner_sample: Vec<(String, String)>,
    pub qa_sample: QaSample,
}

#[derive(Debug, Serialize)]
pub struct QaSample {
    pub context: String,
    pub question: String,
    pub answer: String,
}

/// Generates a small synthetic domain and returns one example of each kind
/// with the generator's measured statistics.
pub fn synth(seed: u64, correlation: f64, generic_overlap: f64) -> Result<SynthPreview, String> {
    let spec = SyntheticDomainSpec {
        entity_answer_correlation: correlation,
        generic_overlap,
        n_train_ner: 20,
        n_train_qa: 20,
        n_dev_qa: 100,
        n_qcls: 10,
        seed,
        ..Default::default()
    };
    spec.validate().map_err(|e| e.to_string())?;
    let b = generate_synthetic_domain(&spec).map_err(|e| e.to_string())?;
    let ner = &b.ner[0];
    let qa = &b.qa_dev[0];
    Ok(SynthPreview {
        seed,
        entity_answer_correlation: correlation,
        generic_overlap,
        dev_entity_answer_fraction: b.dev_entity_answer_fraction(),
        domain_generic_overlap_top50: vocabulary_overlap(&b.domain_corpus, &b.generic_corpus, 50)
            .map_err(|e| e.to_string())?,
        ner_sample: ner.tokens.iter().cloned().zip(ner.tags.iter().cloned()).collect(),
        qa_sample: QaSample {
            context: qa.context.clone(),
            question: qa.question.clone(),
            answer: qa.answers.first().map(|a| a.text.clone()).unwrap_or_default(),
        },
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("serializes")).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn score_answer(prediction: &str, golds: &str) -> Result<String, JsValue> {
    to_js(score(prediction, golds))
}

#[wasm_bindgen]
pub fn overlap_texts(a: &str, b: &str, k: usize) -> Result<String, JsValue> {
    to_js(overlap(a, b, k))
}

#[wasm_bindgen]
pub fn synth_preview(seed: u32, correlation: f64, generic_overlap: f64) -> Result<String, JsValue> {
    to_js(synth(seed as u64, correlation, generic_overlap))
}
