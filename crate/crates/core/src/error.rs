//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape disagreement between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument outside the operation's domain (bad axis, odd size, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Gram-Schmidt received (numerically) linearly dependent vectors.
    #[error("linearly dependent input: {0}")]
    DependentVectors(String),

    /// Training produced a non-finite loss; the message carries a diagnostic dump.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// File reading/writing or format parsing failed.
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
