use thiserror::Error;

/// Errors raised by the estimation and prediction routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data: requested {requested}, available {available}")]
    InsufficientData { requested: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite (size {size}) even after jitter")]
    NotPositiveDefinite { size: usize },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("dense oracle refused: n = {n} exceeds cap {cap}")]
    OracleCapExceeded { n: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, SpinError>;
