use std::collections::HashSet;

use super::formats::TextCorpus;
use super::vocab::{ranked_frequencies, RESERVED};
use crate::{Error, Result};

fn top_k(corpus: &TextCorpus, k: usize) -> Result<HashSet<String>> {
    if corpus.documents.is_empty() {
        return Err(Error::Empty(format!("corpus `{}`", corpus.name)));
    }
    Ok(ranked_frequencies(corpus.documents.iter().map(String::as_str))
        .into_iter()
        .map(|(t, _)| t)
        .filter(|t| !RESERVED.contains(&t.as_str()))
        .take(k)
        .collect())
}

/// Fraction of the `k` most frequent types of `a` that are also among the `k`
/// most frequent types of `b`. Corpora with fewer than `k` types contribute
/// all of them; the denominator stays `k`.
pub fn vocabulary_overlap(a: &TextCorpus, b: &TextCorpus, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidSpec("overlap K must be at least 1".into()));
    }
    let ta = top_k(a, k)?;
    let tb = top_k(b, k)?;
    Ok(ta.intersection(&tb).count() as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> TextCorpus {
        TextCorpus::new("c", docs.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn identical_corpora() {
        let c = corpus(&["alpha beta beta gamma"]);
        assert_eq!(vocabulary_overlap(&c, &c, 3).unwrap(), 1.0);
        assert_eq!(vocabulary_overlap(&c, &c, 2).unwrap(), 1.0);
    }

    #[test]
    fn partial_overlap() {
        let a = corpus(&["a a a b b c"]);
        let b = corpus(&["b b b c c d"]);
        assert!((vocabulary_overlap(&a, &b, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_small() {
        let a = corpus(&["x y"]);
        let b = corpus(&["u v"]);
        assert_eq!(vocabulary_overlap(&a, &b, 2).unwrap(), 0.0);
        // two shared types out of a requested K of 4
        assert_eq!(vocabulary_overlap(&a, &a, 4).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        let empty = TextCorpus { name: "e".into(), documents: vec![] };
        let a = corpus(&["x"]);
        assert!(vocabulary_overlap(&empty, &a, 1).is_err());
        assert!(vocabulary_overlap(&a, &a, 0).is_err());
    }
}
