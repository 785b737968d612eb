use catwgan_core::losses::{GpMode, LossWeights};
use catwgan_core::nets::{ArchConfig, LatentPrior};
use catwgan_core::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    #[default]
    Unsupervised,
    Semi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub critic_steps: usize,
    pub lambda_gp: f64,
    pub alpha: f64,
    pub lambda_ce: f64,
    pub max_g_iters: u64,
    pub checkpoint_every: u64,
    pub gp_mode: GpMode,
    pub latent_prior: LatentPrior,
    /// Standard deviation of the autoencoder's input corruption, in model range.
    pub dae_noise_sigma: f64,
    pub seed: u64,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Unsupervised,
            batch_size: 200,
            lr: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            critic_steps: 5,
            lambda_gp: 10.0,
            alpha: 0.1,
            lambda_ce: 1.0,
            max_g_iters: 16000,
            checkpoint_every: 50,
            gp_mode: GpMode::AsWritten,
            latent_prior: LatentPrior::Uniform,
            dae_noise_sigma: 0.1,
            seed: 0,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2 for the marginal entropy, got {}", self.batch_size));
        }
        if self.critic_steps < 1 {
            return bad("critic_steps must be at least 1".into());
        }
        if self.checkpoint_every < 1 {
            return bad("checkpoint_every must be at least 1".into());
        }
        if !(self.dae_noise_sigma >= 0.0) {
            return bad(format!("dae_noise_sigma must be non-negative, got {}", self.dae_noise_sigma));
        }
        self.adam().validate()?;
        self.weights().validate()?;
        self.arch.validate()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.adam_beta1, beta2: self.adam_beta2, ..AdamConfig::default() }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda_gp: self.lambda_gp, alpha: self.alpha, lambda_ce: self.lambda_ce }
    }

    /// Settings that shape the trajectory; run length and checkpoint
    /// cadence are left out so a run can be extended.
    pub fn trajectory_text(&self) -> String {
        let mut c = self.clone();
        c.max_g_iters = 0;
        c.checkpoint_every = 1;
        flatten(&c).join("\n")
    }

    pub fn hash(&self) -> String {
        catwgan_core::checkpoint::digest(self.trajectory_text().as_bytes())
    }
}

/// `key.path = value` lines in a stable order.
pub fn flatten<S: Serialize>(value: &S) -> Vec<String> {
    fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            other => out.push(format!("{prefix} = {other}")),
        }
    }
    let mut out = Vec::new();
    if let Ok(v) = toml::Value::try_from(value) {
        walk("", &v, &mut out);
    }
    out.sort();
    out
}

/// Line diff of two flattened configs, `-` for stored and `+` for current.
pub fn config_diff(stored: &str, current: &str) -> String {
    let a: Vec<&str> = stored.lines().collect();
    let b: Vec<&str> = current.lines().collect();
    let mut out = Vec::new();
    for l in &a {
        if !b.contains(l) {
            out.push(format!("- {l}"));
        }
    }
    for l in &b {
        if !a.contains(l) {
            out.push(format!("+ {l}"));
        }
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.critic_steps, c.max_g_iters, c.checkpoint_every), (200, 5, 16000, 50));
        assert_eq!((c.lr, c.adam_beta1, c.adam_beta2), (2e-4, 0.5, 0.9));
        assert_eq!((c.lambda_gp, c.alpha, c.lambda_ce), (10.0, 0.1, 1.0));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { critic_steps: 0, ..c }.validate().is_err());
    }

    #[test]
    fn hash_ignores_run_length() {
        let a = TrainConfig::default();
        let b = TrainConfig { max_g_iters: 10, checkpoint_every: 7, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = TrainConfig { lambda_gp: 5.0, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        let d = config_diff(&a.trajectory_text(), &c.trajectory_text());
        assert_eq!(d, "- lambda_gp = 10.0\n+ lambda_gp = 5.0");
    }
}
