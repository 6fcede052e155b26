//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; carries every violated invariant, not just the first.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    /// An operation precondition was violated (trace/window mismatch, missing
    /// SLA category, non-finite input, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Shape mismatch between a parameter set and the data fed to it.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A required artifact (checkpoint, config file) is missing or unreadable.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// Training diverged (non-finite empirical Lagrangian).
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config<S: Into<String>>(msg: S) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn precondition<S: Into<String>>(msg: S) -> Self {
        Error::Precondition(msg.into())
    }
}
