use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NomadError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NomadError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error at row {row}, column {column}: {message}")]
    Validation {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}, head {head}")]
    Divergence { epoch: usize, head: usize },

    #[error("training configuration error: {0}")]
    Configuration(String),

    #[error("enumeration too large: {0}")]
    Size(String),

    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl NomadError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NomadError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        NomadError::Parameter(msg.into())
    }
}
