//! Command-line front end and on-disk formats for the wavelet channel
//! attention library: the `wavenet` binary's subcommands, the checkpoint
//! archive, run configuration files, and graymap raster I/O.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod pgm;

pub use checkpoint::Checkpoint;
pub use config::{DatasetSource, RunConfig};
pub use error::{CliError, Result};
