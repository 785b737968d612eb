//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nets::NetworkHandle;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Optimizer state for the trainable parameters of one network, in the
/// order of [`NetworkHandle::trainable_indices`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, net: &NetworkHandle<T>) -> Self {
        let zeros: Vec<Tensor<T>> = net
            .trainable_indices()
            .into_iter()
            .map(|i| Tensor::zeros(net.params()[i].value.shape()))
            .collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut NetworkHandle<T>, grads: &[Tensor<T>]) -> Result<()> {
        let idx = net.trainable_indices();
        if grads.len() != idx.len() || self.m.len() != idx.len() {
            return Err(Error::Invalid(format!(
                "expected {} gradients, got {}",
                idx.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let t = self.step as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t)).sqrt();
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for (k, &pi) in idx.iter().enumerate() {
            let g = &grads[k];
            let param = net.param_mut(pi);
            if g.shape() != param.value.shape() {
                return Err(shape_err("adam gradient", param.value.shape(), g.shape()));
            }
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((p, &gi), mi), vi) in param.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let denom = vi.sqrt() / bc2 + eps;
                *p = *p - lr * (*mi / bc1) / denom;
            }
        }
        Ok(())
    }

    /// Moment tensors as `(name, tensor)` pairs for checkpointing.
    pub fn state(&self, net: &NetworkHandle<T>) -> Vec<(String, Tensor<T>)> {
        let idx = net.trainable_indices();
        let mut out = Vec::with_capacity(2 * idx.len());
        for (k, &pi) in idx.iter().enumerate() {
            let name = &net.params()[pi].name;
            out.push((format!("{name}.adam_m"), self.m[k].clone()));
            out.push((format!("{name}.adam_v"), self.v[k].clone()));
        }
        out
    }

    pub fn restore(
        config: AdamConfig,
        step: u64,
        net: &NetworkHandle<T>,
        mut lookup: impl FnMut(&str) -> Result<Tensor<T>>,
    ) -> Result<Self> {
        let mut adam = Self::new(config, net);
        adam.step = step;
        for (k, pi) in net.trainable_indices().into_iter().enumerate() {
            let p = &net.params()[pi];
            for (suffix, slot) in [("adam_m", &mut adam.m[k]), ("adam_v", &mut adam.v[k])] {
                let name = format!("{}.{suffix}", p.name);
                let t = lookup(&name)?;
                if t.shape() != p.value.shape() {
                    return Err(Error::Blob { name, reason: format!("shape {:?}", t.shape()) });
                }
                *slot = t;
            }
        }
        Ok(adam)
    }
}
