use thiserror::Error;

/// Errors raised anywhere in the cascade optimization stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "numerical failure: factorization of a {size}x{size} matrix failed after jitter {jitter:e} \
         (diagonal range [{min_diag:e}, {max_diag:e}])"
    )]
    NumericalFailure {
        size: usize,
        jitter: f64,
        min_diag: f64,
        max_diag: f64,
    },

    #[error("stage {stage} evaluator failed: {message}")]
    EvaluatorFailure { stage: usize, message: String },

    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),

    #[error("consistency violation: {0}")]
    ConsistencyViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
