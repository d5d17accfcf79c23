use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (ψ at 0, κ = 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed arguments: size mismatches, unsorted grids, bad parameters.
    #[error("argument error: {0}")]
    Argument(String),

    /// A numerical procedure ran out of budget before reaching its target.
    #[error("numerical error: {what} (achieved tolerance {achieved:.3e})")]
    Numerical { what: String, achieved: f64 },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
