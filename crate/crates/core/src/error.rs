use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    Index { id: usize, vocab_size: usize },

    #[error("cosine similarity undefined for zero vector (row {row})")]
    UndefinedSimilarity { row: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr = {lr})")]
    NonFinite { epoch: usize, batch: usize, lr: f64 },

    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
