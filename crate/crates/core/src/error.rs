use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or message shape does not match the model architecture.
    #[error("architecture error: {0}")]
    Architecture(String),

    /// Caller violated an operation precondition (empty batch, bad length, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("parse error in {}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("plan validation error: {0}")]
    Plan(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("comparison error: {0}")]
    Compare(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line,
            message: message.into(),
        }
    }

    /// Whether the error comes from input data (files, caches) rather than
    /// configuration or runtime state.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Ingestion(_)
                | Error::Parse { .. }
                | Error::Cache(_)
                | Error::Plan(_)
                | Error::Csv(_)
        )
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
