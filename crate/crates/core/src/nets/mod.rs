//! Generator, the two discriminators and the autoencoder baseline.

mod handle;
mod latent;
mod spec;

pub use handle::{Bound, Mode, NetworkHandle, Param, BN_EPS, BN_MOMENTUM};
pub use latent::{sample_latent, LatentPrior};
pub use spec::{
    d1_spec, d2_spec, dae_decoder_spec, dae_encoder_spec, generator_spec, receptive_field, ArchConfig, Layer,
    NetworkName, NetworkSpec, Shape, Stride, LEAKY_SLOPE,
};

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;

pub fn build_generator<T: Scalar, R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> Result<NetworkHandle<T>> {
    cfg.validate()?;
    NetworkHandle::init(generator_spec(cfg), rng)
}

pub fn build_d1<T: Scalar, R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> Result<NetworkHandle<T>> {
    cfg.validate()?;
    NetworkHandle::init(d1_spec(cfg), rng)
}

pub fn build_d2<T: Scalar, R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> Result<NetworkHandle<T>> {
    cfg.validate()?;
    NetworkHandle::init(d2_spec(cfg), rng)
}

/// Encoder (D1 without its classification head) and mirrored decoder.
pub fn build_dae<T: Scalar, R: Rng + ?Sized>(
    cfg: &ArchConfig,
    rng: &mut R,
) -> Result<(NetworkHandle<T>, NetworkHandle<T>)> {
    cfg.validate()?;
    Ok((
        NetworkHandle::init(dae_encoder_spec(cfg), rng)?,
        NetworkHandle::init(dae_decoder_spec(cfg), rng)?,
    ))
}
