use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QseError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("matrix is not hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical abort at t = {t}: {reason}")]
    NumericalAbort { t: f64, reason: String },

    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },

    #[error("grid mismatch between fields")]
    GridMismatch,

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, QseError>;

impl From<std::io::Error> for QseError {
    fn from(err: std::io::Error) -> Self {
        QseError::Io(err.to_string())
    }
}

impl From<serde_json::Error> for QseError {
    fn from(err: serde_json::Error) -> Self {
        QseError::Io(err.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> QseError {
    QseError::InvalidParameter { name, reason: reason.into() }
}
