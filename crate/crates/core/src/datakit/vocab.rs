use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::tokenize::pre_tokenize;
use crate::{Error, Result};

pub const RESERVED: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Word-level vocabulary. Ids 0..=4 are the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const CLS: u32 = 2;
    pub const SEP: u32 = 3;
    pub const MASK: u32 = 4;
    pub const N_RESERVED: usize = RESERVED.len();

    pub fn reserved_only() -> Self {
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect())
            .expect("reserved tokens are unique")
    }

    /// Rebuilds a vocabulary from a full token list (reserved tokens first).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < Self::N_RESERVED
            || tokens.iter().zip(RESERVED).any(|(t, r)| t != r)
        {
            return Err(Error::InvalidSpec(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < Self::N_RESERVED
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(deserializer)?;
        Vocabulary::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

/// Token frequencies under the tokenizer rule, sorted by descending count
/// and then lexicographically.
pub fn ranked_frequencies<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in pre_tokenize(text) {
            *counts.entry(tok.text).or_default() += 1;
        }
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Builds the run vocabulary: the reserved tokens plus the `max_size - 5`
/// most frequent surface tokens of all texts.
pub fn build_vocabulary<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    max_size: usize,
) -> Result<Vocabulary> {
    if max_size < Vocabulary::N_RESERVED {
        return Err(Error::InvalidSpec(format!(
            "vocabulary max_size must be at least {}, got {max_size}",
            Vocabulary::N_RESERVED
        )));
    }
    let ranked = ranked_frequencies(texts);
    if ranked.is_empty() {
        return Err(Error::Empty("no tokens in vocabulary sources".into()));
    }
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        ranked
            .into_iter()
            .map(|(t, _)| t)
            .filter(|t| !RESERVED.contains(&t.as_str()))
            .take(max_size - Vocabulary::N_RESERVED),
    );
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_frequent_first() {
        let v = build_vocabulary(["the cat the"], 7).unwrap();
        assert_eq!(&v.tokens()[5..], ["the", "cat"]);
        assert_eq!(v.id("the"), 5);
        assert_eq!(v.id("dog"), Vocabulary::UNK);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocabulary(["b a"], 6).unwrap();
        assert_eq!(&v.tokens()[5..], ["a"]);
    }

    #[test]
    fn reserved_only_boundary() {
        let v = build_vocabulary(["x y"], 5).unwrap();
        assert_eq!(v, Vocabulary::reserved_only());
        assert_eq!(v.id("x"), Vocabulary::UNK);
        assert!(build_vocabulary(["x"], 4).is_err());
    }

    #[test]
    fn empty_union_fails() {
        assert!(matches!(build_vocabulary(["", "  "], 10), Err(Error::Empty(_))));
    }

    #[test]
    fn serde_roundtrip_checks_reserved() {
        let v = build_vocabulary(["x y z"], 10).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocabulary>(r#"["a"]"#).is_err());
    }
}
