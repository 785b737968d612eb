use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentPrior {
    /// Each component uniform on [-1, 1].
    #[default]
    Uniform,
    StandardNormal,
}

/// `[batch, dim]` draws from the prior.
pub fn sample_latent<T: Scalar, R: Rng + ?Sized>(batch: usize, dim: usize, prior: LatentPrior, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(&[batch, dim], |_| match prior {
        LatentPrior::Uniform => T::lit(rng.random_range(-1.0..=1.0)),
        LatentPrior::StandardNormal => T::lit(rng.sample::<f64, _>(StandardNormal)),
    })
}
