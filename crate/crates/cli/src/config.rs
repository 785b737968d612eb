//! The experiment file: every tunable in one schema-versioned TOML document.

use std::path::Path;

use anyhow::{bail, Context};
use catwgan_data::{AugmentationPolicy, Resolution};
use catwgan_eval::{ProbeConfig, SelectionConfig};
use catwgan_train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "CATWGAN_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Augmentations {
    pub unsupervised: AugmentationPolicy,
    pub semi: AugmentationPolicy,
}

impl Default for Augmentations {
    fn default() -> Self {
        Self { unsupervised: AugmentationPolicy::unsupervised(), semi: AugmentationPolicy::semi_supervised() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    /// Augmented pool size per class (10k per class for the full-size run).
    pub per_class: usize,
    /// Labeled sources per class in semi-supervised mode.
    pub labeled_per_class: usize,
    /// Augmented labeled pool size per class.
    pub labeled_pool_per_class: usize,
    pub resolution: Resolution,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            per_class: 10_000,
            labeled_per_class: 70,
            labeled_pool_per_class: 10_000,
            resolution: Resolution::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub prepare: PrepareConfig,
    pub augment: Augmentations,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub selection: SelectionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            prepare: PrepareConfig::default(),
            augment: Augmentations::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; schema errors name the offending key path.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            anyhow::anyhow!("config key `{path}`: {}", inner.message().trim())
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("config schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version);
        }
        Ok(cfg)
    }

    /// Reads `path` (defaults when absent) and applies `CATWGAN_SEED`.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.prepare.seed = seed;
        self.train.seed = seed;
        self.probe.seed = seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.train.validate().context("train")?;
        self.probe.validate().context("probe")?;
        self.augment.unsupervised.validate().context("augment.unsupervised")?;
        self.augment.semi.validate().context("augment.semi")?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
