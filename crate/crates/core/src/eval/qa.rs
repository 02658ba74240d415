use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;

/// Example id to predicted answer text, the shape the SQuAD evaluator reads.
pub type QaPredictions = BTreeMap<String, String>;

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());
static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());

/// Lowercase, strip punctuation, drop the articles a/an/the, squeeze
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct = PUNCT.replace_all(&lower, "");
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Multiset token-overlap F1 on normalized answers.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Tower Theatre!"), "tower theatre");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("ribose"), "ribose");
        assert_eq!(normalize_answer("  An  apple, a day "), "apple day");
        assert_eq!(normalize_answer("theatre another"), "theatre another");
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("ribose", "ribose, whereas the sugar in DNA is deoxyribose"), 0.25);
        assert_eq!(token_f1("Victor Stone", "Victor Stone"), 1.0);
        assert_eq!(token_f1("red fox", "blue whale"), 0.0);
        assert_eq!(token_f1("the", "a"), 1.0);
        assert_eq!(token_f1("the", "fox"), 0.0);
    }

    #[test]
    fn em_examples() {
        assert_eq!(exact_match("Victor Stone", "Victor Stone"), 1.0);
        assert_eq!(exact_match("Victor Stone", "Victor Stone/Cyborg is a hero"), 0.0);
        assert_eq!(exact_match("the ribose", "ribose"), 1.0);
    }

    fn sorted_tokens(s: &str) -> Vec<String> {
        let mut t: Vec<String> = normalize_answer(s).split_whitespace().map(String::from).collect();
        t.sort();
        t
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn f1_symmetric_and_bounded(a in "(the |a |x |y |z |, ){0,6}", b in "(the |a |x |y |z |, ){0,6}") {
            let f = token_f1(&a, &b);
            prop_assert_eq!(f, token_f1(&b, &a));
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f == 1.0, sorted_tokens(&a) == sorted_tokens(&b));
        }

        #[test]
        fn exact_match_implies_full_f1(a in "\\PC{0,20}", b in "\\PC{0,20}") {
            if exact_match(&a, &b) == 1.0 {
                prop_assert_eq!(token_f1(&a, &b), 1.0);
            }
            prop_assert_eq!(exact_match(&a, &a), 1.0);
        }
    }
}
