use std::collections::BTreeMap;

use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::numcore::{Gradients, Scalar, Tensor};

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub eps: Scalar,
    pub weight_decay: Scalar,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(lr: Scalar) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Updates every parameter accepted by `trainable` that has a gradient.
    /// Nothing is modified if any such gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut DenoiserParams,
        grads: &Gradients,
        trainable: impl Fn(&str) -> bool,
    ) -> Result<()> {
        let mut updates = Vec::new();
        for name in params.names().filter(|n| trainable(n)) {
            let Some(g) = grads.named(name) else { continue };
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: format!("gradient of {name}"),
                });
            }
            updates.push((name.to_string(), g));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in updates {
            let p = params.get_mut(&name)?;
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name).or_insert_with(|| Tensor::zeros(g.shape()));
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, (pi, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *pi -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *pi);
            }
        }
        Ok(())
    }
}
