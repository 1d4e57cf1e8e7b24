//! Crate-wide error type. Module-specific failures (backend transport,
//! vote validation, ...) have their own enums and convert into this one.

use thiserror::Error;

use crate::aggregate::VoteError;
use crate::backend::BackendError;
use crate::parsers::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Vote(#[from] VoteError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error at {path}:{line}: {message}")]
    Dataset {
        path: String,
        line: usize,
        message: String,
    },

    #[error("structural invariant violated: {0}")]
    Structural(String),

    #[error("query {id} has no gold answer, cannot score it")]
    MissingGold { id: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach a path to an io error; `std::io::Error` alone rarely tells
    /// the operator which file was the problem.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
