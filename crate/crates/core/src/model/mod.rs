//! Miniature transformer encoder, task heads, backward pass, optimizer,
//! freeze policies, span decoding and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod decode;
mod encoder;
pub mod freeze;
pub mod heads;
pub mod mlm;
pub mod optim;
pub mod params;
pub mod tensor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::EncoderConfig;
pub use decode::predict_span;
pub use freeze::FreezePolicy;
pub use heads::{head_logits, head_loss, Target};
pub use optim::Adam;
pub use params::{init_encoder, EncoderWeights, HeadKind, Model, TaskHead};
pub use tensor::{Scalar, Tensor};

use crate::{Error, Result};

/// A padded batch. Padding is marked `false` in `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<Vec<u32>>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    /// Pads every sequence with `[PAD]` (id 0) to the longest length.
    pub fn pad(sequences: &[&[u32]]) -> Self {
        let t = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(sequences.len());
        let mut mask = Vec::with_capacity(sequences.len());
        for s in sequences {
            let mut row = s.to_vec();
            row.resize(t, 0);
            ids.push(row);
            let mut m = vec![true; s.len()];
            m.resize(t, false);
            mask.push(m);
        }
        Self { ids, mask }
    }
}

fn check_sequence<F: Scalar>(w: &EncoderWeights<F>, ids: &[u32], valid: &[bool]) -> Result<()> {
    let cfg = &w.config;
    if ids.len() != valid.len() {
        return Err(Error::Shape(format!("{} ids but {} mask entries", ids.len(), valid.len())));
    }
    if ids.len() > cfg.max_positions {
        return Err(Error::Shape(format!(
            "sequence length {} exceeds {} positions",
            ids.len(),
            cfg.max_positions
        )));
    }
    if let Some(id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Shape(format!("token id {id} outside vocabulary of {}", cfg.vocab_size)));
    }
    Ok(())
}

/// Hidden states (`T × H` per row) in evaluation mode.
pub fn encode<F: Scalar>(w: &EncoderWeights<F>, batch: &Batch) -> Result<Vec<Vec<F>>> {
    batch
        .ids
        .iter()
        .zip(&batch.mask)
        .map(|(ids, mask)| {
            check_sequence(w, ids, mask)?;
            Ok(encoder::forward_sequence(w, ids, mask, None).0)
        })
        .collect()
}

/// One supervised sequence.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub ids: &'a [u32],
    pub valid: &'a [bool],
    pub target: Target<'a>,
}

/// Evaluation-mode loss and logits for one example.
pub fn example_loss<F: Scalar>(model: &Model<F>, ex: &Example<'_>) -> Result<(F, Vec<F>)> {
    check_sequence(&model.encoder, ex.ids, ex.valid)?;
    let (hidden, _) = encoder::forward_sequence(&model.encoder, ex.ids, ex.valid, None);
    head_loss(&model.head, &hidden, ex.valid, ex.target)
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions<F> {
    /// Seeds per-example dropout; `None` disables dropout.
    pub dropout_seed: Option<u64>,
    /// Multiplier on the loss (and hence every gradient).
    pub loss_scale: F,
}

impl<F: Scalar> Default for BackwardOptions<F> {
    fn default() -> Self {
        Self {
            dropout_seed: None,
            loss_scale: F::one(),
        }
    }
}

/// Mean loss over `examples` and its gradient with respect to every tensor
/// of `model` (encoder and head).
pub fn backward<F: Scalar>(
    model: &Model<F>,
    examples: &[Example<'_>],
    opts: BackwardOptions<F>,
) -> Result<(F, Model<F>)> {
    if examples.is_empty() {
        return Err(Error::Empty("backward called on an empty batch".into()));
    }
    let mut grads = model.zeros_like();
    let mut total = F::zero();
    for (i, ex) in examples.iter().enumerate() {
        check_sequence(&model.encoder, ex.ids, ex.valid)?;
        let mut rng = opts.dropout_seed.map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            r.set_stream(i as u64);
            r
        });
        let (hidden, cache) = encoder::forward_sequence(&model.encoder, ex.ids, ex.valid, rng.as_mut());
        let out = heads::head_forward(&model.head, &hidden, ex.valid, ex.target, true, Some(&mut grads.head))?;
        total += out.loss;
        let d_hidden = out.d_hidden.expect("gradient requested");
        encoder::backward_sequence(&model.encoder, &cache, &d_hidden, &mut grads.encoder);
    }
    let n = F::from_usize(examples.len()).unwrap();
    let weight = opts.loss_scale / n;
    for (_, t) in grads.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v *= weight);
    }
    let loss = total * opts.loss_scale / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "batch loss".into(),
        });
    }
    Ok((loss, grads))
}
