//! Task losses over encoder hidden states.
//!
//! * MLM: mean cross-entropy over the masked positions.
//! * TokenCls: mean cross-entropy over non-pad positions.
//! * SpanExtract: ½·(CE(start) + CE(end)), logits outside the context
//!   segment masked to −∞.
//! * SeqCls: cross-entropy on the `[CLS]` position.

use std::ops::Range;

use super::params::{HeadKind, Linear, TaskHead};
use super::tensor::{linear, log_softmax_ce, Scalar};
use crate::{Error, Result};

/// Supervision for one sequence.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Mlm(&'a [Option<u32>]),
    Tags(&'a [u32]),
    Span {
        context: &'a Range<usize>,
        start: usize,
        end: usize,
    },
    Class(u32),
}

impl Target<'_> {
    pub fn kind(&self) -> HeadKind {
        match self {
            Target::Mlm(_) => HeadKind::Mlm,
            Target::Tags(_) => HeadKind::TokenCls,
            Target::Span { .. } => HeadKind::SpanExtract,
            Target::Class(_) => HeadKind::SeqCls,
        }
    }
}

pub struct HeadResult<F> {
    pub loss: F,
    /// MLM/TokenCls: one row of `n_out` logits per supervised position.
    /// SpanExtract: `T` start logits followed by `T` end logits.
    /// SeqCls: the class logits.
    pub logits: Vec<F>,
    pub d_hidden: Option<Vec<F>>,
}

struct Rows {
    positions: Vec<usize>,
    golds: Vec<usize>,
}

fn supervised_rows<F: Scalar>(head: &TaskHead<F>, target: Target<'_>, valid: &[bool]) -> Result<Rows> {
    let n = head.n_out();
    let (positions, golds): (Vec<usize>, Vec<usize>) = match target {
        Target::Mlm(labels) => {
            if labels.len() != valid.len() {
                return Err(Error::Shape("MLM labels must cover every position".into()));
            }
            labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.map(|g| (i, g as usize)))
                .unzip()
        }
        Target::Tags(tags) => {
            if tags.len() != valid.len() {
                return Err(Error::Shape(format!("{} tags for {} positions", tags.len(), valid.len())));
            }
            tags.iter()
                .enumerate()
                .filter(|(i, _)| valid[*i])
                .map(|(i, &g)| (i, g as usize))
                .unzip()
        }
        Target::Class(c) => (vec![0], vec![c as usize]),
        Target::Span { .. } => unreachable!("span targets use span_loss"),
    };
    if positions.is_empty() {
        return Err(Error::Empty(format!("no supervised positions for {} head", head.kind.name())));
    }
    if let Some(g) = golds.iter().find(|&&g| g >= n) {
        return Err(Error::Shape(format!("label {g} outside {n} outputs")));
    }
    Ok(Rows { positions, golds })
}

fn row_loss<F: Scalar>(
    proj: &Linear<F>,
    hidden: &[F],
    h: usize,
    rows: &Rows,
    want_grad: bool,
    grad: Option<&mut Linear<F>>,
) -> HeadResult<F> {
    let n = proj.out_dim();
    let gathered: Vec<F> = rows
        .positions
        .iter()
        .flat_map(|&p| hidden[p * h..(p + 1) * h].iter().copied())
        .collect();
    let m = rows.positions.len();
    let logits = linear(&gathered, m, h, &proj.weight.data, n, &proj.bias.data);
    let inv_m = F::one() / F::from_usize(m).unwrap();
    let mut loss = F::zero();
    let mut d_logits = Vec::with_capacity(logits.len());
    for (r, &gold) in rows.golds.iter().enumerate() {
        let (l, mut probs) = log_softmax_ce(&logits[r * n..(r + 1) * n], gold);
        loss += l;
        probs[gold] -= F::one();
        d_logits.extend(probs.into_iter().map(|p| p * inv_m));
    }
    loss *= inv_m;
    let d_hidden = want_grad.then(|| {
        let w = &proj.weight.data;
        let mut grad = grad;
        let mut dh = vec![F::zero(); hidden.len()];
        for (r, &pos) in rows.positions.iter().enumerate() {
            let dy = &d_logits[r * n..(r + 1) * n];
            let x = &gathered[r * h..(r + 1) * h];
            for i in 0..h {
                let wrow = &w[i * n..(i + 1) * n];
                dh[pos * h + i] += wrow.iter().zip(dy).map(|(a, b)| *a * *b).sum::<F>();
            }
            if let Some(g) = grad.as_deref_mut() {
                for (i, &xv) in x.iter().enumerate() {
                    let grow = &mut g.weight.data[i * n..(i + 1) * n];
                    grow.iter_mut().zip(dy).for_each(|(a, b)| *a += xv * *b);
                }
                g.bias.data.iter_mut().zip(dy).for_each(|(a, b)| *a += *b);
            }
        }
        dh
    });
    HeadResult { loss, logits, d_hidden }
}

fn span_loss<F: Scalar>(
    proj: &Linear<F>,
    hidden: &[F],
    h: usize,
    context: &Range<usize>,
    start: usize,
    end: usize,
    want_grad: bool,
    grad: Option<&mut Linear<F>>,
) -> Result<HeadResult<F>> {
    let t_len = hidden.len() / h;
    if context.is_empty() || context.end > t_len {
        return Err(Error::Shape(format!("context segment {context:?} invalid for length {t_len}")));
    }
    if !context.contains(&start) || !context.contains(&end) || start > end {
        return Err(Error::Shape(format!("answer span ({start}, {end}) outside context {context:?}")));
    }
    let raw = linear(hidden, t_len, h, &proj.weight.data, 2, &proj.bias.data);
    let mut logits = vec![F::neg_infinity(); 2 * t_len];
    for t in context.clone() {
        logits[t] = raw[2 * t];
        logits[t_len + t] = raw[2 * t + 1];
    }
    let (ls, mut ps) = log_softmax_ce(&logits[context.clone()], start - context.start);
    let end_ctx = t_len + context.start..t_len + context.end;
    let (le, mut pe) = log_softmax_ce(&logits[end_ctx], end - context.start);
    let half = F::lit(0.5);
    let loss = half * (ls + le);
    let d_hidden = if want_grad {
        ps[start - context.start] -= F::one();
        pe[end - context.start] -= F::one();
        let mut dh = vec![F::zero(); hidden.len()];
        let w = &proj.weight.data;
        let mut gw = vec![F::zero(); 2 * h];
        let mut gb = [F::zero(); 2];
        for (k, t) in context.clone().enumerate() {
            let ds = half * ps[k];
            let de = half * pe[k];
            gb[0] += ds;
            gb[1] += de;
            let row = &hidden[t * h..(t + 1) * h];
            for i in 0..h {
                gw[2 * i] += row[i] * ds;
                gw[2 * i + 1] += row[i] * de;
                dh[t * h + i] = w[2 * i] * ds + w[2 * i + 1] * de;
            }
        }
        if let Some(g) = grad {
            g.weight.data.iter_mut().zip(&gw).for_each(|(a, b)| *a += *b);
            g.bias.data.iter_mut().zip(&gb).for_each(|(a, b)| *a += *b);
        }
        Some(dh)
    } else {
        None
    };
    Ok(HeadResult { loss, logits, d_hidden })
}

/// Loss and logits of `head` on one sequence's hidden states (`T × H`).
/// With `grad` given, head gradients are accumulated there and the hidden
/// gradient is returned.
pub(crate) fn head_forward<F: Scalar>(
    head: &TaskHead<F>,
    hidden: &[F],
    valid: &[bool],
    target: Target<'_>,
    want_grad: bool,
    grad: Option<&mut TaskHead<F>>,
) -> Result<HeadResult<F>> {
    if target.kind() != head.kind {
        return Err(Error::InvalidSpec(format!(
            "{} target given to {} head",
            target.kind().name(),
            head.kind.name()
        )));
    }
    let h = head.proj.weight.shape[0];
    let g = grad.map(|g| &mut g.proj);
    let out = match target {
        Target::Span { context, start, end } => span_loss(&head.proj, hidden, h, context, start, end, want_grad, g)?,
        other => {
            let rows = supervised_rows(head, other, valid)?;
            row_loss(&head.proj, hidden, h, &rows, want_grad, g)
        }
    };
    if !out.loss.is_finite() {
        return Err(Error::NonFinite {
            context: format!("{} loss", head.kind.name()),
        });
    }
    Ok(out)
}

/// Raw per-position logits (`T × n_out`, row-major) for inference. Span
/// heads give a start and an end column.
pub fn head_logits<F: Scalar>(head: &TaskHead<F>, hidden: &[F]) -> Vec<F> {
    let h = head.proj.weight.shape[0];
    linear(hidden, hidden.len() / h, h, &head.proj.weight.data, head.n_out(), &head.proj.bias.data)
}

/// Scalar loss and logits for one sequence.
pub fn head_loss<F: Scalar>(head: &TaskHead<F>, hidden: &[F], valid: &[bool], target: Target<'_>) -> Result<(F, Vec<F>)> {
    let r = head_forward(head, hidden, valid, target, false, None)?;
    Ok((r.loss, r.logits))
}
