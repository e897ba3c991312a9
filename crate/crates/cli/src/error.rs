use std::path::Path;

use chl_core::ChlError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// The spec, checkpoint or arguments are malformed.
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("run diverged: {0}")]
    Diverged(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Core(ChlError),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Io { .. } => EXIT_FAILURE,
            CliError::Core(e) if e.is_divergence() => EXIT_DIVERGED,
            CliError::Core(e) if is_validation(e) => EXIT_VALIDATION,
            CliError::Core(_) => EXIT_FAILURE,
        }
    }
}

fn is_validation(e: &ChlError) -> bool {
    matches!(
        e,
        ChlError::InvalidConfig(_)
            | ChlError::InvalidDistribution(_)
            | ChlError::InvalidLayout(_)
            | ChlError::DimensionMismatch { .. }
            | ChlError::LayerOutOfRange { .. }
    )
}

impl From<ChlError> for CliError {
    fn from(e: ChlError) -> Self {
        match e {
            ChlError::Io { path, message } => CliError::Io { path, message },
            other => CliError::Core(other),
        }
    }
}
