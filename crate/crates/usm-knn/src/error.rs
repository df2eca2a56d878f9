//! Crate-wide error type.
//!
//! Variants are grouped so the command-line front end can map them onto
//! distinct exit codes: configuration problems, data/format problems, and
//! metrics that are undefined for the given inputs.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: unsupported scheme, bad parameter values,
    /// malformed run configs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A sequence id that does not resolve to a payload.
    #[error("unknown sequence id `{0}`")]
    UnknownId(String),

    /// Malformed input or output file contents.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    /// I/O failure with the offending path attached.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Invalid data that is not tied to a single file (empty datasets,
    /// degenerate inputs, inconsistent shapes).
    #[error("data error: {0}")]
    Data(String),

    /// A metric whose value is undefined for the given inputs, e.g. spam
    /// precision when nothing was predicted as spam.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the `usmknn` binary: 2 for configuration
    /// errors, 3 for data errors, 4 for undefined metrics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::UndefinedMetric(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
