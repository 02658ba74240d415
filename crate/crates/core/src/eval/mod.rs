//! Answer scoring, NER and question-classification diagnostics, and
//! regimen comparison over result tables.

mod compare;
mod ner;
mod qa;

pub use compare::{best_regimen, Best, ResultsTable};
pub use ner::{entity_counts, entity_f1, extract_entities, EntityCounts, EntitySpan};
pub use qa::{exact_match, normalize_answer, token_f1, QaPredictions};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datakit::{NerExample, QaExample, QclsExample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTask {
    Qa,
    Ner,
    Qcls,
    /// Masked-token accuracy.
    Mlm,
}

/// Scores in percent (mean × 100).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: MetricTask,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entity_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    pub n_examples: usize,
    pub missing: usize,
}

impl MetricReport {
    /// F1 for QA, entity F1 for NER, accuracy otherwise.
    pub fn primary(&self) -> f64 {
        match self.task {
            MetricTask::Qa => self.f1,
            MetricTask::Ner => self.entity_f1,
            MetricTask::Qcls | MetricTask::Mlm => self.accuracy,
        }
        .unwrap_or(0.0)
    }
}

/// `matrix[k][j]` is the metric on stage `j`'s held-out data using the
/// encoder after stage `k` and the head trained in stage `j`, for `j ≤ k`.
/// Stages without held-out data give `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub stages: Vec<String>,
    pub metrics: Vec<MetricTask>,
    pub matrix: Vec<Vec<Option<f64>>>,
}

impl ForgettingReport {
    /// Entry for 1-based stage numbers `(k, j)`.
    pub fn entry(&self, k: usize, j: usize) -> Option<f64> {
        self.matrix.get(k.checked_sub(1)?)?.get(j.checked_sub(1)?).copied().flatten()
    }
}

fn check_ids<'a>(ids: impl Iterator<Item = &'a String>, known: &BTreeMap<&str, usize>) -> Result<()> {
    for id in ids {
        if !known.contains_key(id.as_str()) {
            return Err(Error::Missing(format!("prediction for unknown example id {id:?}")));
        }
    }
    Ok(())
}

/// SQuAD scoring: each example takes the max F1 and EM over its golds.
/// Missing predictions score zero and are counted.
pub fn evaluate_qa(predictions: &QaPredictions, examples: &[QaExample]) -> Result<MetricReport> {
    if examples.is_empty() {
        return Err(Error::Empty("no QA examples to evaluate".into()));
    }
    let known: BTreeMap<&str, usize> = examples.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    check_ids(predictions.keys(), &known)?;
    let (mut f1, mut em, mut missing) = (0.0, 0.0, 0);
    for ex in examples {
        if ex.answers.is_empty() {
            return Err(Error::Empty(format!("example {} has no gold answer", ex.id)));
        }
        let Some(pred) = predictions.get(&ex.id) else {
            missing += 1;
            continue;
        };
        f1 += ex.answers.iter().map(|a| token_f1(pred, &a.text)).fold(0.0, f64::max);
        em += ex.answers.iter().map(|a| exact_match(pred, &a.text)).fold(0.0, f64::max);
    }
    let n = examples.len() as f64;
    Ok(MetricReport {
        task: MetricTask::Qa,
        f1: Some(100.0 * f1 / n),
        exact_match: Some(100.0 * em / n),
        entity_f1: None,
        accuracy: None,
        n_examples: examples.len(),
        missing,
    })
}

/// Micro-averaged entity F1. `predictions[i]` tags `examples[i]`; `None`
/// counts as missing and is scored as all `O`.
pub fn evaluate_ner(predictions: &[Option<Vec<String>>], examples: &[NerExample]) -> Result<MetricReport> {
    if examples.is_empty() {
        return Err(Error::Empty("no NER examples to evaluate".into()));
    }
    if predictions.len() != examples.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} examples",
            predictions.len(),
            examples.len()
        )));
    }
    let mut total = EntityCounts::default();
    let mut missing = 0;
    for (p, ex) in predictions.iter().zip(examples) {
        let outside;
        let pred = match p {
            Some(p) => p.as_slice(),
            None => {
                missing += 1;
                outside = vec!["O".to_string(); ex.tags.len()];
                outside.as_slice()
            }
        };
        total += entity_counts(pred, &ex.tags)?;
    }
    Ok(MetricReport {
        task: MetricTask::Ner,
        f1: None,
        exact_match: None,
        entity_f1: Some(100.0 * total.f1()),
        accuracy: None,
        n_examples: examples.len(),
        missing,
    })
}

pub fn evaluate_qcls(predictions: &[Option<String>], examples: &[QclsExample]) -> Result<MetricReport> {
    if examples.is_empty() {
        return Err(Error::Empty("no QCLS examples to evaluate".into()));
    }
    if predictions.len() != examples.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} examples",
            predictions.len(),
            examples.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(examples)
        .filter(|(p, ex)| p.as_deref() == Some(ex.label.as_str()))
        .count();
    Ok(MetricReport {
        task: MetricTask::Qcls,
        f1: None,
        exact_match: None,
        entity_f1: None,
        accuracy: Some(100.0 * correct as f64 / examples.len() as f64),
        n_examples: examples.len(),
        missing: predictions.iter().filter(|p| p.is_none()).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::Answer;

    fn qa(id: &str, golds: &[&str]) -> QaExample {
        QaExample {
            id: id.into(),
            context: golds.join(" "),
            question: "q".into(),
            answers: golds
                .iter()
                .map(|g| Answer {
                    text: g.to_string(),
                    char_start: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn max_over_golds() {
        let ex = vec![qa("a", &["The Tower Theatre", "cinema"])];
        let preds = QaPredictions::from([("a".to_string(), "tower theatre".to_string())]);
        let r = evaluate_qa(&preds, &ex).unwrap();
        assert_eq!(r.exact_match, Some(100.0));
        assert_eq!(r.f1, Some(100.0));
    }

    #[test]
    fn empty_predictions_all_missing() {
        let ex = vec![qa("a", &["x"]), qa("b", &["y"])];
        let r = evaluate_qa(&QaPredictions::new(), &ex).unwrap();
        assert_eq!((r.f1, r.exact_match, r.missing), (Some(0.0), Some(0.0), 2));
    }

    #[test]
    fn perfect_predictions() {
        let ex = vec![qa("a", &["x y"]), qa("b", &["z"])];
        let preds = QaPredictions::from([("a".into(), "x y".into()), ("b".into(), "z".into())]);
        let r = evaluate_qa(&preds, &ex).unwrap();
        assert_eq!((r.f1, r.exact_match, r.missing), (Some(100.0), Some(100.0), 0));
    }

    #[test]
    fn errors() {
        assert!(evaluate_qa(&QaPredictions::new(), &[]).is_err());
        let preds = QaPredictions::from([("zz".into(), "x".into())]);
        assert!(evaluate_qa(&preds, &[qa("a", &["x"])]).is_err());
    }

    #[test]
    fn ner_and_qcls_reports() {
        let tags = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        let ex = vec![NerExample {
            tokens: tags("a b c"),
            tags: tags("B-PER I-PER O"),
        }];
        let r = evaluate_ner(&[Some(tags("B-PER I-PER O"))], &ex).unwrap();
        assert_eq!(r.primary(), 100.0);
        let r = evaluate_ner(&[None], &ex).unwrap();
        assert_eq!((r.primary(), r.missing), (0.0, 1));
        let q = vec![
            QclsExample {
                question: "x".into(),
                label: "LOC".into(),
            },
            QclsExample {
                question: "y".into(),
                label: "PER".into(),
            },
        ];
        let r = evaluate_qcls(&[Some("LOC".into()), Some("LOC".into())], &q).unwrap();
        assert_eq!(r.primary(), 50.0);
    }

    proptest::proptest! {
        #[test]
        fn multi_gold_dominates_any_subset(pred in "[a-c ]{0,8}", golds in proptest::collection::vec("[a-c ]{0,8}", 1..4), keep in 0usize..4) {
            let refs: Vec<&str> = golds.iter().map(|s| s.as_str()).collect();
            let full = vec![qa("a", &refs)];
            let sub = vec![qa("a", &refs[..(keep % refs.len()) + 1])];
            let preds = QaPredictions::from([("a".to_string(), pred)]);
            let a = evaluate_qa(&preds, &full).unwrap();
            let b = evaluate_qa(&preds, &sub).unwrap();
            proptest::prop_assert!(a.f1 >= b.f1 && a.exact_match >= b.exact_match);
        }
    }
}
