use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("unsupported relative degree {0} (only r = 2 is implemented)")]
    UnsupportedOrder(usize),

    #[error("barrier synthesis failed: {0}")]
    Synthesis(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("singular KKT system: {0}")]
    Singular(String),

    #[error("pose {pose:?} lies outside the world bounds")]
    OutOfBounds { pose: Vec<f64> },

    #[error("initial state is outside C(0): psi0(0,x0) = {psi0:.6e}, psi1(0,x0) = {psi1:.6e}")]
    Precondition { psi0: f64, psi1: f64 },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}
