use serde::{Deserialize, Serialize};

use super::freeze::FreezePolicy;
use super::params::Model;
use super::tensor::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` in place. `step` is the
/// already-incremented step count.
pub fn adam_update<F: Scalar>(param: &mut [F], grad: &[F], m: &mut [F], v: &mut [F], hp: &AdamConfig, step: u64) {
    let b1 = F::lit(hp.beta1);
    let b2 = F::lit(hp.beta2);
    let bc1 = F::lit(1.0 - hp.beta1.powi(step as i32));
    let bc2 = F::lit(1.0 - hp.beta2.powi(step as i32));
    let lr = F::lit(hp.lr);
    let eps = F::lit(hp.eps);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (F::one() - b1) * g;
        v[i] = b2 * v[i] + (F::one() - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam state over every tensor of a [`Model`], in canonical tensor order.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, model: &Model<F>) -> Self {
        let moments = model
            .tensors()
            .into_iter()
            .map(|(_, t)| (vec![F::zero(); t.len()], vec![F::zero(); t.len()]))
            .collect();
        Self {
            config,
            step: 0,
            moments,
        }
    }

    /// Updates every tensor not frozen by `policy`. Fails without touching
    /// the model if any trainable gradient is non-finite.
    pub fn step(&mut self, model: &mut Model<F>, grads: &Model<F>, policy: &FreezePolicy) -> Result<()> {
        let grad_tensors = grads.tensors();
        for (name, g) in &grad_tensors {
            if !policy.is_frozen(name) && !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {name}"),
                });
            }
        }
        self.step += 1;
        for (((name, p), (_, g)), (m, v)) in model
            .tensors_mut()
            .into_iter()
            .zip(&grad_tensors)
            .zip(self.moments.iter_mut())
        {
            if policy.is_frozen(&name) {
                continue;
            }
            adam_update(&mut p.data, &g.data, m, v, &self.config, self.step);
        }
        Ok(())
    }
}
