use tensorcore::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid team: {0}")]
    InvalidTeam(String),

    #[error("robot {robot}: invalid action index {action} (expected 0..5)")]
    InvalidAction { robot: usize, action: usize },

    #[error("expected {expected} actions, got {found}")]
    ActionCount { expected: usize, found: usize },

    #[error("could not place {robots} robots at least {separation} m apart after {attempts} attempts")]
    Placement {
        robots: usize,
        separation: f64,
        attempts: usize,
    },

    #[error("feature layout mismatch: expected {expected}, found width {found}")]
    Layout { expected: String, found: usize },

    #[error("variant {variant} requires {what}, which the batch does not carry")]
    MissingConditioning { variant: String, what: &'static str },

    #[error("variant {variant} is unsupported here: {reason}")]
    UnsupportedVariant { variant: String, reason: String },

    #[error("adjacency matrix must be square and symmetric: {0}")]
    Adjacency(String),

    #[error("critic expects a team of {expected} robots, got {found}")]
    TeamSize { expected: usize, found: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("environment error at step {step}: {source}")]
    Rollout {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<Error> for TensorError {
    fn from(e: Error) -> Self {
        match e {
            Error::Tensor(t) => t,
            other => TensorError::External(Box::new(other)),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
