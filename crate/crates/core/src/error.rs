use std::path::PathBuf;

/// Errors surfaced by every layer of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimensions, sizes, or settings that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    /// An API was called in a state where the call is not allowed.
    #[error("usage error: {0}")]
    Usage(String),
    /// NaN or infinity showed up where finite numbers are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A broken internal guarantee (for example a frozen parameter changed).
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
