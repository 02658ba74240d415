use serde::{Deserialize, Serialize};

use super::params::Model;
use super::tensor::Scalar;
use crate::{Error, Result};

/// Which parameters an optimizer may touch during a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FreezePolicy {
    #[default]
    None,
    /// Embeddings and the lowest `k` encoder layers stay fixed.
    BottomKLayers { k: usize },
    /// Every encoder tensor stays fixed; only the head trains.
    EncoderFrozenHeadOnly,
}

impl FreezePolicy {
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        match *self {
            FreezePolicy::BottomKLayers { k } if k > n_layers => Err(Error::InvalidSpec(format!(
                "cannot freeze {k} layers of a {n_layers}-layer encoder"
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_frozen(&self, tensor: &str) -> bool {
        match *self {
            FreezePolicy::None | FreezePolicy::BottomKLayers { k: 0 } => false,
            FreezePolicy::EncoderFrozenHeadOnly => tensor.starts_with("encoder."),
            FreezePolicy::BottomKLayers { k } => {
                if tensor.ends_with("_embedding") {
                    return true;
                }
                tensor
                    .strip_prefix("encoder.layers.")
                    .and_then(|rest| rest.split('.').next())
                    .and_then(|i| i.parse::<usize>().ok())
                    .is_some_and(|i| i < k)
            }
        }
    }

    pub fn freezes_encoder(&self) -> bool {
        matches!(self, FreezePolicy::EncoderFrozenHeadOnly)
    }

    pub fn label(&self) -> String {
        match self {
            FreezePolicy::None => "none".into(),
            FreezePolicy::BottomKLayers { k } => format!("bottom_{k}"),
            FreezePolicy::EncoderFrozenHeadOnly => "head_only".into(),
        }
    }
}

/// Zeroes the gradients of frozen tensors.
pub fn apply_freeze_policy<F: Scalar>(grads: &mut Model<F>, policy: &FreezePolicy) -> Result<()> {
    policy.validate(grads.encoder.layers.len())?;
    for (name, t) in grads.tensors_mut() {
        if policy.is_frozen(&name) {
            t.data.iter_mut().for_each(|v| *v = F::zero());
        }
    }
    Ok(())
}
