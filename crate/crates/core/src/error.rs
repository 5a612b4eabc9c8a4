//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by simulation components.
#[derive(Debug, Error)]
pub enum Error {
    /// Two parameter vectors (or a vector and a model) disagree on layout.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// An input is degenerate for the requested operation, e.g. a zero-norm
    /// vector fed to a cosine similarity.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A configuration value is out of range or inconsistent with others.
    #[error("invalid config: {0}")]
    Config(String),

    /// A dataset file could not be decoded. `offset` is the byte position at
    /// which decoding failed.
    #[error("dataset parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    /// A numeric quantity that must be finite was not.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
