#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("semi-supervised mode needs a labeled pool")]
    MissingLabeled,
    #[error("empty pool")]
    EmptyPool,
    #[error("checkpoint was written with a different config:\n{0}")]
    ConfigMismatch(String),
    #[error("{0}")]
    Stats(String),
    #[error(transparent)]
    Core(#[from] catwgan_core::Error),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
