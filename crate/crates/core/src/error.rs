use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration problem, tagged with the dotted path of the offending field.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("eigen-solver did not converge on a {size}x{size} matrix ({kind})")]
    EigenSolver { size: usize, kind: String },

    #[error("non-finite state for walker {walker} at step {step}; the step size is probably too large")]
    NonFinite { walker: usize, step: usize },

    #[error("rejection sampler acceptance rate {rate:.3e} is below 1e-4; use a better proposal or a smaller beta")]
    LowAcceptance { rate: f64 },

    #[error("region has zero canonical mass ({mass:.3e})")]
    ZeroMass { mass: f64 },

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
