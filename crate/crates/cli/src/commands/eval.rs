//! `eval`: load a trained checkpoint, rebuild the config's dataset split,
//! and print top-1 accuracy on the test half.

use std::path::PathBuf;

use wavenet_core::nn::evaluate;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::model::load_classifier;

use super::load_dataset;

pub fn cmd_eval(checkpoint: &PathBuf, config: Option<&PathBuf>) -> Result<i32> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ck = Checkpoint::load(checkpoint)?;
    let mut net = load_classifier(&ck)?;
    if net.classes() != cfg.train.classes {
        return Err(CliError::Format(format!(
            "checkpoint was trained for {} classes, config describes {}",
            net.classes(),
            cfg.train.classes
        )));
    }
    if net.in_channels() != cfg.train.in_channels {
        return Err(CliError::Format(format!(
            "checkpoint expects {} input channels, config describes {}",
            net.in_channels(),
            cfg.train.in_channels
        )));
    }
    let (_, test) = load_dataset(&cfg)?;
    let (loss, acc) = evaluate(
        &mut net,
        &test,
        cfg.train.batch_size,
        cfg.train.label_smoothing,
    )?;
    eprintln!("test_loss {loss:.4} on {} samples", test.len());
    println!("top1 {acc:.4}");
    Ok(0)
}
