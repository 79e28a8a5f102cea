//! `train`: run the configured training loop, stream per-epoch metrics to
//! a CSV file (and stderr), and write the trained model as a checkpoint.
//! The final test accuracy goes to stdout.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use wavenet_core::attention::SqueezeMode;
use wavenet_core::nn::{train_classifier, EpochStats};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::model::save_classifier;

use super::load_dataset;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub config: Option<PathBuf>,
    pub squeeze: Option<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_train(opts: &TrainOptions) -> Result<i32> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = &opts.squeeze {
        cfg.train.squeeze = SqueezeMode::parse(mode)?;
    }
    if let Some(seed) = opts.seed {
        cfg.train.seed = seed;
    }

    let (train, test) = load_dataset(&cfg)?;
    fs::create_dir_all(&opts.out).map_err(|e| CliError::io(&opts.out, e))?;
    let csv_path = opts.out.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    writeln!(csv, "{}", EpochStats::csv_header()).map_err(|e| CliError::io(&csv_path, e))?;

    eprintln!(
        "training squeeze={} on {} train / {} test samples",
        cfg.train.squeeze.as_str(),
        train.len(),
        test.len()
    );
    let (net, history) = train_classifier(&cfg.train, &train, &test, |stats| {
        let _ = writeln!(csv, "{}", stats.csv_row());
        eprintln!(
            "epoch {:>3} lr {:.4e} train_loss {:.4} train_acc {:.4} test_loss {:.4} test_acc {:.4}",
            stats.epoch, stats.lr, stats.train_loss, stats.train_acc, stats.test_loss,
            stats.test_acc
        );
    })?;

    let ck = save_classifier(&net, &cfg.train)?;
    let ck_path = opts.out.join("model.ckpt");
    ck.save(&ck_path)?;
    write_resolved_config(&cfg, &opts.out)?;

    let final_acc = history.last().map_or(0.0, |s| s.test_acc);
    println!("test_acc {final_acc:.4}");
    Ok(0)
}

fn write_resolved_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = out.join("config.cfg");
    fs::write(&path, cfg.to_text()).map_err(|e| CliError::io(&path, e))
}
