//! CLI-side error type; everything here maps to exit code 1 (user error).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] wavenet_core::Error),

    #[error("{0}")]
    Io(String),

    /// Malformed checkpoint, raster, or config input.
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}
