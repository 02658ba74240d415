use std::collections::HashSet;
use std::ops::AddAssign;

use crate::datakit::formats::split_tag;
use crate::{Error, Result};

/// Inclusive token span with its entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

/// Maximal BIO spans. An `I-X` that does not continue an `X` entity opens
/// a new one, as in conlleval.
pub fn extract_entities(tags: &[String]) -> Vec<EntitySpan> {
    let mut out = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (prefix, ty) = split_tag(tag).unwrap_or(('O', ""));
        let continues = prefix == 'I' && open.as_ref().is_some_and(|o| o.entity_type == ty);
        if continues {
            open.as_mut().unwrap().end = i;
            continue;
        }
        out.extend(open.take());
        if prefix != 'O' {
            open = Some(EntitySpan {
                entity_type: ty.to_string(),
                start: i,
                end: i,
            });
        }
    }
    out.extend(open);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EntityCounts {
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
}

impl EntityCounts {
    /// Both sides empty counts as perfect.
    pub fn f1(&self) -> f64 {
        if self.predicted == 0 && self.gold == 0 {
            return 1.0;
        }
        if self.matched == 0 {
            return 0.0;
        }
        let p = self.matched as f64 / self.predicted as f64;
        let r = self.matched as f64 / self.gold as f64;
        2.0 * p * r / (p + r)
    }
}

impl AddAssign for EntityCounts {
    fn add_assign(&mut self, o: Self) {
        self.predicted += o.predicted;
        self.gold += o.gold;
        self.matched += o.matched;
    }
}

pub fn entity_counts(pred: &[String], gold: &[String]) -> Result<EntityCounts> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!("{} predicted tags for {} gold tags", pred.len(), gold.len())));
    }
    let p: HashSet<EntitySpan> = extract_entities(pred).into_iter().collect();
    let g: HashSet<EntitySpan> = extract_entities(gold).into_iter().collect();
    Ok(EntityCounts {
        predicted: p.len(),
        gold: g.len(),
        matched: p.intersection(&g).count(),
    })
}

/// Micro-averaged entity F1 over aligned `(pred, gold)` sequences.
pub fn entity_f1<P: AsRef<[String]>, G: AsRef<[String]>>(pairs: impl IntoIterator<Item = (P, G)>) -> Result<f64> {
    let mut total = EntityCounts::default();
    for (p, g) in pairs {
        total += entity_counts(p.as_ref(), g.as_ref())?;
    }
    Ok(total.f1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn examples() {
        let one = tags("B-PER I-PER O");
        assert_eq!(entity_f1([(&one, &one)]).unwrap(), 1.0);
        assert_eq!(entity_f1([(tags("B-PER O O"), one.clone())]).unwrap(), 0.0);
        assert_eq!(entity_f1([(tags("O O O"), one.clone())]).unwrap(), 0.0);
        assert_eq!(entity_f1([(tags("O O"), tags("O O"))]).unwrap(), 1.0);
        assert!(entity_f1([(tags("O"), tags("O O"))]).is_err());
    }

    #[test]
    fn spans() {
        let e = extract_entities(&tags("I-LOC I-LOC B-LOC I-PER O B-ORG"));
        let got: Vec<(usize, usize, &str)> = e.iter().map(|s| (s.start, s.end, s.entity_type.as_str())).collect();
        assert_eq!(got, vec![(0, 1, "LOC"), (2, 2, "LOC"), (3, 3, "PER"), (5, 5, "ORG")]);
    }

    /// Tests every (start, end, type) against the span definition directly.
    fn brute_force(t: &[String]) -> HashSet<EntitySpan> {
        let parts: Vec<(&str, &str)> = t.iter().map(|s| s.split_once('-').unwrap_or(("O", ""))).collect();
        let mut out = HashSet::new();
        for s in 0..t.len() {
            for e in s..t.len() {
                for ty in ["PER", "LOC"] {
                    let opens = parts[s] == ("B", ty)
                        || (parts[s] == ("I", ty) && (s == 0 || parts[s - 1].1 != ty || parts[s - 1].0 == "O"));
                    let inner = (s + 1..=e).all(|i| parts[i] == ("I", ty));
                    let closed = e + 1 == t.len() || parts[e + 1] != ("I", ty);
                    if opens && inner && closed {
                        out.insert(EntitySpan {
                            entity_type: ty.into(),
                            start: s,
                            end: e,
                        });
                    }
                }
            }
        }
        out
    }

    fn tag_seq() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop_oneof![Just("O"), Just("B-PER"), Just("I-PER"), Just("B-LOC"), Just("I-LOC")], 0..=10)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_brute_force_oracle(pred in tag_seq(), gold_seed in tag_seq()) {
            let mut gold = gold_seed;
            gold.resize(pred.len(), "O".into());
            let (bp, bg) = (brute_force(&pred), brute_force(&gold));
            let extracted: HashSet<EntitySpan> = extract_entities(&pred).into_iter().collect();
            prop_assert_eq!(&extracted, &bp);
            let matched = bp.intersection(&bg).count();
            let expected = if bp.is_empty() && bg.is_empty() {
                1.0
            } else if matched == 0 {
                0.0
            } else {
                let (p, r) = (matched as f64 / bp.len() as f64, matched as f64 / bg.len() as f64);
                2.0 * p * r / (p + r)
            };
            prop_assert_eq!(entity_f1([(&pred, &gold)]).unwrap(), expected);
        }
    }
}
