use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel index ({row}, {col}) outside the 8x8 grid")]
    Index { row: usize, col: usize },

    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or scenario value is missing or invalid.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{}:{line}: {reason}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{}:{line}: validation failed: {reason}", file.display())]
    Validation {
        file: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
