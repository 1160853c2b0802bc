use std::path::Path;

use spin_core::SpinError;

/// Failure of a command, classified by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flag values or combinations.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input files.
    #[error("{0}")]
    Data(String),
    /// A covariance matrix that could not be factorized.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<SpinError> for CliError {
    fn from(err: SpinError) -> Self {
        let msg = err.to_string();
        match err {
            SpinError::InvalidParameter(_) => CliError::Usage(msg),
            SpinError::NotPositiveDefinite { .. } => CliError::Numerical(msg),
            SpinError::EmptyInput(_)
            | SpinError::InsufficientData { .. }
            | SpinError::DimensionMismatch(_)
            | SpinError::RankDeficient(_)
            | SpinError::OracleCapExceeded { .. } => CliError::Data(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
