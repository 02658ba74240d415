//! Word-level tokenizer with character offsets.
//!
//! Rule: lowercase, split on Unicode whitespace, then peel leading and
//! trailing ASCII punctuation off each word as one-character tokens. Offsets
//! are `(start, end)` character (code point) positions in the original text,
//! the same unit SQuAD uses for `answer_start`.

use super::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn pre_tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_word(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_word(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    while lo < end && chars[lo].is_ascii_punctuation() {
        out.push(make_token(chars, lo, lo + 1));
        lo += 1;
    }
    let mut hi = end;
    while hi > lo && chars[hi - 1].is_ascii_punctuation() {
        hi -= 1;
    }
    if lo < hi {
        out.push(make_token(chars, lo, hi));
    }
    for p in hi..end {
        out.push(make_token(chars, p, p + 1));
    }
}

fn make_token(chars: &[char], start: usize, end: usize) -> Token {
    let surface: String = chars[start..end].iter().collect();
    Token {
        text: surface.to_lowercase(),
        start,
        end,
    }
}

/// Token ids plus per-token `(start, end)` character offsets.
pub fn tokenize_with_offsets(text: &str, vocab: &Vocabulary) -> (Vec<u32>, Vec<(usize, usize)>) {
    pre_tokenize(text)
        .into_iter()
        .map(|t| (vocab.id(&t.text), (t.start, t.end)))
        .unzip()
}

/// Slice of `text` between two character positions.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let lo = indices.by_ref().nth(start).unwrap_or(text.len());
    let hi = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        lo
    };
    &text[lo..hi]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(text: &str) -> Vec<String> {
        pre_tokenize(text).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn sentence_with_trailing_period() {
        let toks = pre_tokenize("The cat sat.");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["the", "cat", "sat", "."]);
        let offsets: Vec<_> = toks.iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(offsets, [(0, 3), (4, 7), (8, 11), (11, 12)]);
    }

    #[test]
    fn empty_text() {
        let vocab = Vocabulary::reserved_only();
        assert_eq!(tokenize_with_offsets("", &vocab), (vec![], vec![]));
    }

    #[test]
    fn trailing_comma_is_split() {
        assert_eq!(surfaces("ribose,"), ["ribose", ","]);
    }

    #[test]
    fn inner_punctuation_stays() {
        assert_eq!(surfaces("(U.S.-based)"), ["(", "u.s.-based", ")"]);
        assert_eq!(surfaces("..."), [".", ".", "."]);
    }

    #[test]
    fn unknown_words_keep_offsets() {
        let vocab = Vocabulary::reserved_only();
        let (ids, offsets) = tokenize_with_offsets("héllo wörld", &vocab);
        assert_eq!(ids, vec![Vocabulary::UNK; 2]);
        assert_eq!(offsets, vec![(0, 5), (6, 11)]);
    }

    #[test]
    fn char_slice_counts_code_points() {
        assert_eq!(char_slice("héllo wörld", 6, 11), "wörld");
        assert_eq!(char_slice("abc", 1, 1), "");
        assert_eq!(char_slice("abc", 0, 3), "abc");
    }

    proptest! {
        #[test]
        fn offsets_reproduce_surfaces(text in "\\PC{0,40}") {
            for tok in pre_tokenize(&text) {
                prop_assert_eq!(char_slice(&text, tok.start, tok.end).to_lowercase(), tok.text);
            }
        }
    }
}
