use std::ops::Range;

use super::tensor::Scalar;
use crate::datakit::tokenize::char_slice;
use crate::{Error, Result};

pub const MAX_ANSWER_LEN: usize = 30;

/// Highest-scoring `(start, end)` with `start ≤ end < start + max_len`, both
/// inside `context`, maximizing `start_logits[s] + end_logits[e]`. Ties go to
/// the smallest start, then the smallest end.
pub fn predict_span<F: Scalar>(
    start_logits: &[F],
    end_logits: &[F],
    context: &Range<usize>,
    max_answer_len: usize,
) -> Result<(usize, usize)> {
    if context.is_empty() {
        return Err(Error::Empty("context segment".into()));
    }
    if context.end > start_logits.len() || context.end > end_logits.len() {
        return Err(Error::Shape("context segment exceeds logits".into()));
    }
    let mut best: Option<(F, usize, usize)> = None;
    for s in context.clone() {
        let stop = (s + max_answer_len.max(1)).min(context.end);
        for e in s..stop {
            let score = start_logits[s] + end_logits[e];
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, s, e));
            }
        }
    }
    let (_, s, e) = best.expect("non-empty context");
    Ok((s, e))
}

/// Maps a packed-sequence span back to answer text through the context
/// tokens' character offsets.
pub fn span_text(context: &str, offsets: &[(usize, usize)], context_start: usize, span: (usize, usize)) -> String {
    let (s, e) = (span.0 - context_start, span.1 - context_start);
    char_slice(context, offsets[s].0, offsets[e].1).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(start: &[f64], end: &[f64], ctx: Range<usize>, w: usize) -> (usize, usize) {
        let mut pairs = Vec::new();
        for s in ctx.clone() {
            for e in ctx.clone() {
                if s <= e && e < s + w {
                    pairs.push((start[s] + end[e], s, e));
                }
            }
        }
        let best = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let (_, s, e) = pairs.into_iter().find(|p| p.0 == best).unwrap();
        (s, e)
    }

    #[test]
    fn consistent_peaks() {
        let mut s = vec![0.0; 8];
        let mut e = vec![0.0; 8];
        s[2] = 4.0;
        e[4] = 3.0;
        assert_eq!(predict_span(&s, &e, &(0..8), 30).unwrap(), (2, 4));
    }

    #[test]
    fn window_tie_prefers_earliest() {
        let s = [5.0, 0.0, 0.0];
        let e = [0.0, 0.0, 5.0];
        assert_eq!(predict_span(&s, &e, &(0..3), 2).unwrap(), (0, 0));
        assert_eq!(brute_force(&s, &e, 0..3, 2), (0, 0));
    }

    #[test]
    fn end_before_start_falls_back_to_brute_force_optimum() {
        let s = [0.0, 0.1, 0.0, 3.0, 0.0];
        let e = [2.5, 0.0, 0.2, 0.0, 0.1];
        let got = predict_span(&s, &e, &(0..5), 30).unwrap();
        assert_ne!(got, (3, 0));
        assert_eq!(got, brute_force(&s, &e, 0..5, 30));
    }

    #[test]
    fn random_logits_match_brute_force() {
        let mut x = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x % 1000) as f64 / 100.0
        };
        for trial in 0..200 {
            let t = 4 + trial % 12;
            let s: Vec<f64> = (0..t).map(|_| next()).collect();
            let e: Vec<f64> = (0..t).map(|_| next()).collect();
            let ctx = 1..t - 1;
            let w = 1 + trial % 5;
            assert_eq!(predict_span(&s, &e, &ctx, w).unwrap(), brute_force(&s, &e, ctx, w));
        }
    }

    #[test]
    fn empty_context() {
        assert!(predict_span(&[0.0f64], &[0.0], &(0..0), 30).is_err());
    }

    #[test]
    fn decodes_text() {
        let ctx = "Victor Stone is Cyborg.";
        let offsets = [(0, 6), (7, 12), (13, 15), (16, 22), (22, 23)];
        assert_eq!(span_text(ctx, &offsets, 4, (4, 5)), "Victor Stone");
    }
}
