//! Training loops for the adversarial model and the autoencoder baseline.

pub mod config;
pub mod dae;
pub mod error;
pub mod stats;
pub mod trainer;

pub use config::{config_diff, TrainConfig, TrainMode};
pub use dae::{corrupt, DaeRecord, DaeTrainer};
pub use error::{Result, TrainError};
pub use stats::{StatRecord, StepStats, TrainStats};
pub use trainer::{LabeledPool, Pools, StepDetail, Trainer};
