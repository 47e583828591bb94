use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("{op}: row index {index} out of range for {rows} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss value {0}")]
    NonFiniteLoss(f64),

    #[error("parameter `{0}` not found")]
    UnknownParameter(String),

    #[error("parameter sets disagree: {0}")]
    ParameterMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Error raised by caller code inside a loss closure.
    #[error(transparent)]
    External(Box<dyn std::error::Error + Send + Sync>),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
