use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MsnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("quadrature tolerance {requested:.1e} not met (achieved error estimate {achieved:.3e}, value {value})")]
    ToleranceNotMet {
        requested: f64,
        achieved: f64,
        value: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, MsnError>;

impl From<std::io::Error> for MsnError {
    fn from(e: std::io::Error) -> Self {
        MsnError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MsnError {
    fn from(e: serde_json::Error) -> Self {
        MsnError::Serde(e.to_string())
    }
}
