//! Pre-norm transformer encoder: forward pass with activation cache and the
//! matching hand-written backward pass.
//!
//! ```text
//! x = tok[id] + pos[t]
//! per layer:  x += Drop(Attn(LN1(x)))
//!             x += Drop(W2·gelu(W1·LN2(x)))
//! h = LN_final(x)
//! ```
//!
//! Padded positions are excluded as attention keys; their own outputs are
//! computed but never reach a loss, so their gradients are exactly zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{EncoderWeights, LayerNorm, Linear};
use super::tensor::{linear, linear_backward, Scalar};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

struct LnCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

fn layer_norm<F: Scalar>(x: &[F], h: usize, ln: &LayerNorm<F>) -> (Vec<F>, LnCache<F>) {
    let rows = x.len() / h;
    let eps = F::lit(LN_EPS);
    let hf = F::from_usize(h).unwrap();
    let mut y = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * h..(r + 1) * h];
        let mean = row.iter().copied().sum::<F>() / hf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / hf;
        let rs = F::one() / (var + eps).sqrt();
        rstd.push(rs);
        for (i, &v) in row.iter().enumerate() {
            let n = (v - mean) * rs;
            xhat.push(n);
            y.push(n * ln.gain.data[i] + ln.bias.data[i]);
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<F: Scalar>(dy: &[F], cache: &LnCache<F>, h: usize, ln: &LayerNorm<F>, grad: &mut LayerNorm<F>) -> Vec<F> {
    let rows = dy.len() / h;
    let hf = F::from_usize(h).unwrap();
    let mut dx = vec![F::zero(); dy.len()];
    for r in 0..rows {
        let dyr = &dy[r * h..(r + 1) * h];
        let xh = &cache.xhat[r * h..(r + 1) * h];
        let mut sum_d = F::zero();
        let mut sum_dx = F::zero();
        for i in 0..h {
            grad.gain.data[i] += dyr[i] * xh[i];
            grad.bias.data[i] += dyr[i];
            let d = dyr[i] * ln.gain.data[i];
            sum_d += d;
            sum_dx += d * xh[i];
        }
        let mean_d = sum_d / hf;
        let mean_dx = sum_dx / hf;
        let rs = cache.rstd[r];
        for i in 0..h {
            let d = dyr[i] * ln.gain.data[i];
            dx[r * h + i] = rs * (d - mean_d - xh[i] * mean_dx);
        }
    }
    dx
}

fn gelu<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let k = F::lit(GELU_K);
    let half = F::lit(0.5);
    half * x * (F::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let k = F::lit(GELU_K);
    let half = F::lit(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::lit(3.0) * k * x * x)
}

fn dropout_mask<F: Scalar>(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<F> {
    let keep = F::lit(1.0 / (1.0 - p));
    (0..n).map(|_| if rng.random::<f64>() < p { F::zero() } else { keep }).collect()
}

struct LayerCache<F> {
    ln1: LnCache<F>,
    normed1: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// heads × T × T attention probabilities (zero at masked keys)
    probs: Vec<F>,
    ctx: Vec<F>,
    attn_mask: Option<Vec<F>>,
    ln2: LnCache<F>,
    normed2: Vec<F>,
    pre_act: Vec<F>,
    act: Vec<F>,
    ffn_mask: Option<Vec<F>>,
}

/// Activations kept for the backward pass of one sequence.
pub struct SequenceCache<F> {
    ids: Vec<u32>,
    len: usize,
    emb_mask: Option<Vec<F>>,
    layers: Vec<LayerCache<F>>,
    final_ln: LnCache<F>,
}

fn apply_mask<F: Scalar>(x: &mut [F], mask: &Option<Vec<F>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, k)| *v *= *k);
    }
}

/// Runs one sequence. `valid[t]` is false at padded positions. Dropout is
/// active only when `rng` is given and the configured rate is positive.
/// Returns `T × H` hidden states.
pub(crate) fn forward_sequence<F: Scalar>(
    w: &EncoderWeights<F>,
    ids: &[u32],
    valid: &[bool],
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Vec<F>, SequenceCache<F>) {
    let cfg = &w.config;
    let (t_len, h) = (ids.len(), cfg.hidden);
    let p = cfg.dropout;
    let mut mask = |n: usize| -> Option<Vec<F>> {
        match rng.as_deref_mut() {
            Some(r) if p > 0.0 => Some(dropout_mask(n, p, r)),
            _ => None,
        }
    };

    let mut x = Vec::with_capacity(t_len * h);
    for (t, &id) in ids.iter().enumerate() {
        let tok = &w.token_embedding.data[id as usize * h..(id as usize + 1) * h];
        let pos = &w.position_embedding.data[t * h..(t + 1) * h];
        x.extend(tok.iter().zip(pos).map(|(a, b)| *a + *b));
    }
    let emb_mask = mask(x.len());
    apply_mask(&mut x, &emb_mask);

    let n_heads = cfg.heads;
    let d = cfg.head_dim();
    let scale = F::one() / F::from_usize(d).unwrap().sqrt();
    let mut layers = Vec::with_capacity(w.layers.len());
    for lw in &w.layers {
        let (normed1, ln1) = layer_norm(&x, h, &lw.ln1);
        let proj = |l: &Linear<F>| linear(&normed1, t_len, h, &l.weight.data, h, &l.bias.data);
        let (q, k, v) = (proj(&lw.query), proj(&lw.key), proj(&lw.value));

        let mut probs = vec![F::zero(); n_heads * t_len * t_len];
        let mut ctx = vec![F::zero(); t_len * h];
        let mut scores = vec![F::zero(); t_len];
        for hd in 0..n_heads {
            let off = hd * d;
            for i in 0..t_len {
                let qi = &q[i * h + off..i * h + off + d];
                let mut max = F::neg_infinity();
                for j in 0..t_len {
                    if valid[j] {
                        let kj = &k[j * h + off..j * h + off + d];
                        let s = qi.iter().zip(kj).map(|(a, b)| *a * *b).sum::<F>() * scale;
                        scores[j] = s;
                        max = max.max(s);
                    }
                }
                let row = &mut probs[(hd * t_len + i) * t_len..(hd * t_len + i + 1) * t_len];
                let mut sum = F::zero();
                for j in 0..t_len {
                    if valid[j] {
                        let e = (scores[j] - max).exp();
                        row[j] = e;
                        sum += e;
                    }
                }
                if sum > F::zero() {
                    row.iter_mut().for_each(|r| *r /= sum);
                }
                let ci = &mut ctx[i * h + off..i * h + off + d];
                for j in 0..t_len {
                    let pij = row[j];
                    if pij != F::zero() {
                        let vj = &v[j * h + off..j * h + off + d];
                        ci.iter_mut().zip(vj).for_each(|(c, vv)| *c += pij * *vv);
                    }
                }
            }
        }
        let mut attn_out = linear(&ctx, t_len, h, &lw.output.weight.data, h, &lw.output.bias.data);
        let attn_mask = mask(attn_out.len());
        apply_mask(&mut attn_out, &attn_mask);
        x.iter_mut().zip(&attn_out).for_each(|(a, b)| *a += *b);

        let (normed2, ln2) = layer_norm(&x, h, &lw.ln2);
        let f = cfg.ffn;
        let pre_act = linear(&normed2, t_len, h, &lw.ffn_in.weight.data, f, &lw.ffn_in.bias.data);
        let act: Vec<F> = pre_act.iter().map(|&u| gelu(u)).collect();
        let mut ffn = linear(&act, t_len, f, &lw.ffn_out.weight.data, h, &lw.ffn_out.bias.data);
        let ffn_mask = mask(ffn.len());
        apply_mask(&mut ffn, &ffn_mask);
        x.iter_mut().zip(&ffn).for_each(|(a, b)| *a += *b);

        layers.push(LayerCache {
            ln1,
            normed1,
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            ln2,
            normed2,
            pre_act,
            act,
            ffn_mask,
        });
    }
    let (hidden, final_ln) = layer_norm(&x, h, &w.final_ln);
    (
        hidden,
        SequenceCache {
            ids: ids.to_vec(),
            len: t_len,
            emb_mask,
            layers,
            final_ln,
        },
    )
}

/// Accumulates parameter gradients for one sequence into `grad`, given the
/// gradient of the loss with respect to the hidden states.
pub(crate) fn backward_sequence<F: Scalar>(
    w: &EncoderWeights<F>,
    cache: &SequenceCache<F>,
    d_hidden: &[F],
    grad: &mut EncoderWeights<F>,
) {
    let cfg = &w.config;
    let (t_len, h, f) = (cache.len, cfg.hidden, cfg.ffn);
    let n_heads = cfg.heads;
    let d = cfg.head_dim();
    let scale = F::one() / F::from_usize(d).unwrap().sqrt();

    let mut dx = layer_norm_backward(d_hidden, &cache.final_ln, h, &w.final_ln, &mut grad.final_ln);
    for (li, lw) in w.layers.iter().enumerate().rev() {
        let c = &cache.layers[li];
        let g = &mut grad.layers[li];

        // feed-forward branch
        let mut d_ffn = dx.clone();
        apply_mask(&mut d_ffn, &c.ffn_mask);
        let d_act = linear_backward(
            &c.act, &d_ffn, t_len, f, &lw.ffn_out.weight.data, h,
            &mut g.ffn_out.weight.data, &mut g.ffn_out.bias.data,
        );
        let d_pre: Vec<F> = d_act.iter().zip(&c.pre_act).map(|(da, u)| *da * gelu_grad(*u)).collect();
        let d_normed2 = linear_backward(
            &c.normed2, &d_pre, t_len, h, &lw.ffn_in.weight.data, f,
            &mut g.ffn_in.weight.data, &mut g.ffn_in.bias.data,
        );
        let d_ln2 = layer_norm_backward(&d_normed2, &c.ln2, h, &lw.ln2, &mut g.ln2);
        dx.iter_mut().zip(&d_ln2).for_each(|(a, b)| *a += *b);

        // attention branch
        let mut d_attn = dx.clone();
        apply_mask(&mut d_attn, &c.attn_mask);
        let d_ctx = linear_backward(
            &c.ctx, &d_attn, t_len, h, &lw.output.weight.data, h,
            &mut g.output.weight.data, &mut g.output.bias.data,
        );
        let mut dq = vec![F::zero(); t_len * h];
        let mut dk = vec![F::zero(); t_len * h];
        let mut dv = vec![F::zero(); t_len * h];
        let mut dp = vec![F::zero(); t_len];
        for hd in 0..n_heads {
            let off = hd * d;
            for i in 0..t_len {
                let row = &c.probs[(hd * t_len + i) * t_len..(hd * t_len + i + 1) * t_len];
                let dci = &d_ctx[i * h + off..i * h + off + d];
                let mut dot = F::zero();
                for j in 0..t_len {
                    let pij = row[j];
                    if pij == F::zero() {
                        dp[j] = F::zero();
                        continue;
                    }
                    let vj = &c.v[j * h + off..j * h + off + d];
                    dp[j] = dci.iter().zip(vj).map(|(a, b)| *a * *b).sum();
                    dot += pij * dp[j];
                    let dvj = &mut dv[j * h + off..j * h + off + d];
                    dvj.iter_mut().zip(dci).for_each(|(a, b)| *a += pij * *b);
                }
                for j in 0..t_len {
                    let pij = row[j];
                    if pij == F::zero() {
                        continue;
                    }
                    let ds = pij * (dp[j] - dot) * scale;
                    for e in 0..d {
                        dq[i * h + off + e] += ds * c.k[j * h + off + e];
                        dk[j * h + off + e] += ds * c.q[i * h + off + e];
                    }
                }
            }
        }
        let mut d_normed1 = linear_backward(
            &c.normed1, &dq, t_len, h, &lw.query.weight.data, h,
            &mut g.query.weight.data, &mut g.query.bias.data,
        );
        for (dy, lin, gl) in [(&dk, &lw.key, &mut g.key), (&dv, &lw.value, &mut g.value)] {
            let part = linear_backward(&c.normed1, dy, t_len, h, &lin.weight.data, h, &mut gl.weight.data, &mut gl.bias.data);
            d_normed1.iter_mut().zip(&part).for_each(|(a, b)| *a += *b);
        }
        let d_ln1 = layer_norm_backward(&d_normed1, &c.ln1, h, &lw.ln1, &mut g.ln1);
        dx.iter_mut().zip(&d_ln1).for_each(|(a, b)| *a += *b);
    }

    apply_mask(&mut dx, &cache.emb_mask);
    for (t, &id) in cache.ids.iter().enumerate() {
        let src = &dx[t * h..(t + 1) * h];
        let tok = &mut grad.token_embedding.data[id as usize * h..(id as usize + 1) * h];
        tok.iter_mut().zip(src).for_each(|(a, b)| *a += *b);
        let pos = &mut grad.position_embedding.data[t * h..(t + 1) * h];
        pos.iter_mut().zip(src).for_each(|(a, b)| *a += *b);
    }
}
