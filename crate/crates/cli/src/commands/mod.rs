//! Subcommand implementations. Each returns the process exit code on
//! success: 0 for plain success, 2 when a verification-style command found
//! failures. User errors surface as `CliError` (exit code 1 in main).

mod bench;
mod dwt;
mod eval;
mod filters;
mod train;
mod verify;

pub use bench::cmd_bench;
pub use dwt::{cmd_dwt, parse_norm, DwtOptions, TransformPath};
pub use eval::cmd_eval;
pub use filters::{cmd_filters, FiltersOptions};
pub use train::{cmd_train, TrainOptions};
pub use verify::cmd_verify;

use wavenet_core::data::{
    mean_std, normalize, read_idx_with_labels, split, synth_textures, Dataset,
};

use crate::config::{DatasetSource, RunConfig};
use crate::error::{CliError, Result};

/// Build the (train, test) pair a config describes: generate or read the
/// source, split stratified by the config seed, and normalize both halves
/// by the training statistics.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let full = match &cfg.dataset {
        DatasetSource::Synth { n } => {
            synth_textures(cfg.train.seed, *n, cfg.train.classes)?
        }
        DatasetSource::Idx { images, labels } => {
            let ds = read_idx_with_labels(images, labels)?;
            if ds.classes > cfg.train.classes {
                return Err(CliError::Format(format!(
                    "dataset holds labels up to {} but config says {} classes",
                    ds.classes - 1,
                    cfg.train.classes
                )));
            }
            Dataset::new(ds.images, ds.labels, cfg.train.classes)?
        }
    };
    let (train, test) = split(&full, cfg.split_ratio, cfg.train.seed)?;
    let (mean, std) = mean_std(&train);
    Ok((
        normalize(&train, mean, std)?,
        normalize(&test, mean, std)?,
    ))
}
