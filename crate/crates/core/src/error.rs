use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} data in {path}: {reason}")]
    Format {
        format: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("model file {path}: {source}")]
    ModelLoad {
        path: PathBuf,
        #[source]
        source: crate::train::ledm::LoadError,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing prerequisite: {0}")]
    Missing(String),

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
