#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0} and {1} lengths differ")]
    Length(&'static str, &'static str),
    #[error("need both classes present")]
    SingleClass,
    #[error("no positive samples")]
    NoPositives,
    #[error("class {label} has {have} members, fewer than {k} folds")]
    ClassTooSmall { label: bool, have: usize, k: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("no checkpoints found in {0}")]
    NoCheckpoints(String),
    #[error(transparent)]
    Core(#[from] catwgan_core::Error),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
