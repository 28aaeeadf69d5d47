use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum DwellError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numeric range exceeded: {0}")]
    NumericRange(String),

    #[error("no convergence: {message} (best estimate {estimate})")]
    NonConvergence { message: String, estimate: f64 },

    #[error("inconsistent equality constraints (residual {residual:e})")]
    InfeasibleEqualities { residual: f64 },

    #[error("certificate requested from a problem that was not certified")]
    NotCertified,

    #[error("search failed: {0}")]
    Search(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DwellError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DwellError::InvalidInput(msg.into()))
}

pub(crate) fn mismatch<T>(msg: impl Into<String>) -> Result<T> {
    Err(DwellError::DimensionMismatch(msg.into()))
}
