//! Encoder and head parameters with a stable, named tensor order. The same
//! structures hold gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::tensor::{Scalar, Tensor};
use crate::Result;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gain: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Scalar> LayerNorm<F> {
    fn new(h: usize) -> Self {
        Self {
            gain: Tensor::filled(&[h], F::one()),
            bias: Tensor::zeros(&[h]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `in × out`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Scalar> Linear<F> {
    fn random(inp: usize, out: usize, sample: &mut impl FnMut() -> F) -> Self {
        Self {
            weight: Tensor::from_vec(&[inp, out], (0..inp * out).map(|_| sample()).collect()),
            bias: Tensor::zeros(&[out]),
        }
    }

    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[inp, out]),
            bias: Tensor::zeros(&[out]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<F> {
    pub ln1: LayerNorm<F>,
    pub query: Linear<F>,
    pub key: Linear<F>,
    pub value: Linear<F>,
    pub output: Linear<F>,
    pub ln2: LayerNorm<F>,
    pub ffn_in: Linear<F>,
    pub ffn_out: Linear<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<F> {
    pub config: EncoderConfig,
    /// `V × H`
    pub token_embedding: Tensor<F>,
    /// `T_max × H`
    pub position_embedding: Tensor<F>,
    pub layers: Vec<LayerWeights<F>>,
    pub final_ln: LayerNorm<F>,
}

/// Samples every embedding and projection from N(0, 0.02²); layer norms
/// start at gain 1, bias 0.
pub fn init_encoder<F: Scalar>(config: &EncoderConfig) -> Result<EncoderWeights<F>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid deviation");
    let mut sample = || F::lit(normal.sample(&mut rng));
    let (h, f) = (config.hidden, config.ffn);
    let token_embedding = Tensor::from_vec(
        &[config.vocab_size, h],
        (0..config.vocab_size * h).map(|_| sample()).collect(),
    );
    let position_embedding = Tensor::from_vec(
        &[config.max_positions, h],
        (0..config.max_positions * h).map(|_| sample()).collect(),
    );
    let layers = (0..config.n_layers)
        .map(|_| LayerWeights {
            ln1: LayerNorm::new(h),
            query: Linear::random(h, h, &mut sample),
            key: Linear::random(h, h, &mut sample),
            value: Linear::random(h, h, &mut sample),
            output: Linear::random(h, h, &mut sample),
            ln2: LayerNorm::new(h),
            ffn_in: Linear::random(h, f, &mut sample),
            ffn_out: Linear::random(f, h, &mut sample),
        })
        .collect();
    Ok(EncoderWeights {
        config: config.clone(),
        token_embedding,
        position_embedding,
        layers,
        final_ln: LayerNorm::new(h),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadKind {
    Mlm,
    TokenCls,
    SpanExtract,
    SeqCls,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Mlm => "mlm",
            HeadKind::TokenCls => "token_cls",
            HeadKind::SpanExtract => "span_extract",
            HeadKind::SeqCls => "seq_cls",
        }
    }
}

/// Task-specific output layer over the encoder's hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead<F> {
    pub kind: HeadKind,
    /// Label inventory: tag set, class names, or empty for MLM and spans.
    pub labels: Vec<String>,
    pub proj: Linear<F>,
}

impl<F: Scalar> TaskHead<F> {
    /// Zero-initialized head. `n_out` is the vocabulary size for MLM and is
    /// ignored for span extraction (always two columns).
    pub fn zeros(kind: HeadKind, hidden: usize, labels: Vec<String>, vocab_size: usize) -> Self {
        let n_out = match kind {
            HeadKind::Mlm => vocab_size,
            HeadKind::SpanExtract => 2,
            HeadKind::TokenCls | HeadKind::SeqCls => labels.len(),
        };
        Self {
            kind,
            labels,
            proj: Linear::zeros(hidden, n_out),
        }
    }

    pub fn n_out(&self) -> usize {
        self.proj.out_dim()
    }
}

/// Encoder plus the head currently being trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub encoder: EncoderWeights<F>,
    pub head: TaskHead<F>,
}

impl<F: Scalar> EncoderWeights<F> {
    /// `(name, tensor)` pairs in canonical order. Checkpoints, the optimizer
    /// and freeze policies all rely on this order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out: Vec<(String, &Tensor<F>)> = vec![
            ("encoder.token_embedding".into(), &self.token_embedding),
            ("encoder.position_embedding".into(), &self.position_embedding),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("encoder.layers.{i}");
            out.push((format!("{p}.ln1.gain"), &l.ln1.gain));
            out.push((format!("{p}.ln1.bias"), &l.ln1.bias));
            for (name, lin) in [("query", &l.query), ("key", &l.key), ("value", &l.value), ("output", &l.output)] {
                out.push((format!("{p}.attn.{name}.weight"), &lin.weight));
                out.push((format!("{p}.attn.{name}.bias"), &lin.bias));
            }
            out.push((format!("{p}.ln2.gain"), &l.ln2.gain));
            out.push((format!("{p}.ln2.bias"), &l.ln2.bias));
            out.push((format!("{p}.ffn_in.weight"), &l.ffn_in.weight));
            out.push((format!("{p}.ffn_in.bias"), &l.ffn_in.bias));
            out.push((format!("{p}.ffn_out.weight"), &l.ffn_out.weight));
            out.push((format!("{p}.ffn_out.bias"), &l.ffn_out.bias));
        }
        out.push(("encoder.final_ln.gain".into(), &self.final_ln.gain));
        out.push(("encoder.final_ln.bias".into(), &self.final_ln.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out: Vec<(String, &mut Tensor<F>)> = vec![
            ("encoder.token_embedding".into(), &mut self.token_embedding),
            ("encoder.position_embedding".into(), &mut self.position_embedding),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("encoder.layers.{i}");
            out.push((format!("{p}.ln1.gain"), &mut l.ln1.gain));
            out.push((format!("{p}.ln1.bias"), &mut l.ln1.bias));
            for (name, lin) in [
                ("query", &mut l.query),
                ("key", &mut l.key),
                ("value", &mut l.value),
                ("output", &mut l.output),
            ] {
                out.push((format!("{p}.attn.{name}.weight"), &mut lin.weight));
                out.push((format!("{p}.attn.{name}.bias"), &mut lin.bias));
            }
            out.push((format!("{p}.ln2.gain"), &mut l.ln2.gain));
            out.push((format!("{p}.ln2.bias"), &mut l.ln2.bias));
            out.push((format!("{p}.ffn_in.weight"), &mut l.ffn_in.weight));
            out.push((format!("{p}.ffn_in.bias"), &mut l.ffn_in.bias));
            out.push((format!("{p}.ffn_out.weight"), &mut l.ffn_out.weight));
            out.push((format!("{p}.ffn_out.bias"), &mut l.ffn_out.bias));
        }
        out.push(("encoder.final_ln.gain".into(), &mut self.final_ln.gain));
        out.push(("encoder.final_ln.bias".into(), &mut self.final_ln.bias));
        out
    }
}

impl<F: Scalar> Model<F> {
    /// Encoder tensors followed by `head.weight` and `head.bias`.
    pub fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = self.encoder.tensors();
        out.push(("head.weight".into(), &self.head.proj.weight));
        out.push(("head.bias".into(), &self.head.proj.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = self.encoder.tensors_mut();
        out.push(("head.weight".into(), &mut self.head.proj.weight));
        out.push(("head.bias".into(), &mut self.head.proj.bias));
        out
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = F::zero());
        }
        z
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let enc = &self.encoder;
        let ln = |l: &LayerNorm<F>| LayerNorm {
            gain: l.gain.cast(),
            bias: l.bias.cast(),
        };
        let lin = |l: &Linear<F>| Linear {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        Model {
            encoder: EncoderWeights {
                config: enc.config.clone(),
                token_embedding: enc.token_embedding.cast(),
                position_embedding: enc.position_embedding.cast(),
                layers: enc
                    .layers
                    .iter()
                    .map(|l| LayerWeights {
                        ln1: ln(&l.ln1),
                        query: lin(&l.query),
                        key: lin(&l.key),
                        value: lin(&l.value),
                        output: lin(&l.output),
                        ln2: ln(&l.ln2),
                        ffn_in: lin(&l.ffn_in),
                        ffn_out: lin(&l.ffn_out),
                    })
                    .collect(),
                final_ln: ln(&enc.final_ln),
            },
            head: TaskHead {
                kind: self.head.kind,
                labels: self.head.labels.clone(),
                proj: lin(&self.head.proj),
            },
        }
    }
}
