use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// The network is incompatible with the requested dynamics.
    #[error("model error: {0}")]
    Model(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
