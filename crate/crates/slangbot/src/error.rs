use std::path::{Path, PathBuf};

use slangbot_core::corpus::CorpusError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {} invalid record(s)", .errors.len())]
    Corpus { path: PathBuf, errors: Vec<CorpusError> },
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, message: impl ToString) -> Self {
        Self::Format { path: path.as_ref().to_path_buf(), message: message.to_string() }
    }

    pub fn validation(message: impl ToString) -> Self {
        Self::Validation(message.to_string())
    }

    /// Process exit code: 1 for bad input data, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
