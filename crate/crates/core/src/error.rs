use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the benchmark pipeline.
///
/// The variants are coarse on purpose: front-ends map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Two parameter vectors (or grids) that must agree in layout do not.
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    /// Invalid configuration or pre-condition supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error in {context}: {message}")]
    Data { context: String, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Wire-format or round-protocol violation.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data { context: context.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Prefix the message with extra context (a case ID, a site, a round).
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Structural(m) => Error::Structural(format!("{ctx}: {m}")),
            Error::Bounds(m) => Error::Bounds(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Data { context, message } => Error::Data { context: format!("{ctx}: {context}"), message },
            Error::Evaluation(m) => Error::Evaluation(format!("{ctx}: {m}")),
            Error::Protocol(m) => Error::Protocol(format!("{ctx}: {m}")),
            io @ Error::Io { .. } => io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
