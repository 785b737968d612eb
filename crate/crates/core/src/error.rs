use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("critic output is not a differentiable function of its input")]
    NotDifferentiable,
    #[error("receptive field undefined for generators (transposed convolution at layer {0})")]
    ReceptiveFieldUndefined(usize),
    #[error("input {got}x{got} is smaller than the {needed}x{needed} receptive field")]
    InputTooSmall { needed: usize, got: usize },
    #[error("network must be in inference mode for {0}")]
    RequiresInference(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("parameter blob `{name}`: {reason}")]
    Blob { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: &[usize], got: &[usize]) -> Error {
    Error::Shape {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
