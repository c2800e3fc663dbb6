use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FfError {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("class coverage: {0}")]
    Coverage(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl FfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FfError::Io {
            path: path.into(),
            source,
        }
    }
}
