use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// A file did not follow the expected binary layout.
    #[error("format error: {0}")]
    Format(String),

    /// Accuracy could not be computed (empty or missing ground truth).
    #[error("metric error: {0}")]
    Metric(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    /// The frame source failed; `window` is the last fully emitted window (0 if none).
    #[error("frame source failed after window {window}: {source}")]
    Source {
        window: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn metric(msg: impl Into<String>) -> Self {
        Error::Metric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
