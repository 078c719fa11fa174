//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Invalid shapes, parameters, or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A detected-but-uncorrupted execution: NaN/Inf surfaced in
    /// activations, feature sums, or logits.
    #[error("DUE: {0}")]
    Due(String),

    /// Weights file does not start with the expected magic bytes.
    #[error("bad magic: expected QSNT, found {0:?}")]
    BadMagic([u8; 4]),

    /// Weights file declares an unknown format version.
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    /// Weights file ended before the declared payload was read.
    #[error("truncated payload: {0}")]
    Truncated(String),

    /// Malformed text input (topology, config, CSV, JSON).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
