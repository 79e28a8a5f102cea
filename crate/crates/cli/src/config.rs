//! Flat key=value run configuration. Every key has a documented default;
//! unknown keys are rejected, and parse errors name the offending line.

use std::fmt::Write as _;
use std::path::PathBuf;

use wavenet_core::attention::SqueezeMode;
use wavenet_core::nn::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Synthetic texture classification with `n` samples.
    Synth { n: usize },
    /// IDX image/label file pair.
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: DatasetSource,
    pub split_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            dataset: DatasetSource::Synth { n: 2000 },
            split_ratio: 0.8,
        }
    }
}

impl RunConfig {
    /// Parse `key = value` lines; '#' starts a comment, blank lines are
    /// skipped. Unknown keys and malformed values fail with the 1-based
    /// line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut synth_n = match cfg.dataset {
            DatasetSource::Synth { n } => n,
            _ => unreachable!(),
        };
        let mut idx_paths: Option<(PathBuf, PathBuf)> = None;
        let mut use_idx = false;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Format(format!("line {lineno}: expected key = value, got '{raw}'"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                CliError::Format(format!("line {lineno}: {what} (key '{key}', value '{value}')"))
            };
            macro_rules! num {
                ($ty:ty) => {
                    value.parse::<$ty>().map_err(|_| bad("malformed number"))?
                };
            }
            match key {
                "dataset" => {
                    if value == "synth" {
                        use_idx = false;
                    } else if let Some(rest) = value.strip_prefix("idx:") {
                        let (images, labels) = rest.split_once(':').ok_or_else(|| {
                            bad("idx dataset needs idx:IMAGES:LABELS")
                        })?;
                        idx_paths = Some((PathBuf::from(images), PathBuf::from(labels)));
                        use_idx = true;
                    } else {
                        return Err(bad("dataset must be 'synth' or 'idx:IMAGES:LABELS'"));
                    }
                }
                "n" => synth_n = num!(usize),
                "classes" => cfg.train.classes = num!(usize),
                "split_ratio" => cfg.split_ratio = num!(f64),
                "seed" => cfg.train.seed = num!(u64),
                "epochs" => cfg.train.epochs = num!(usize),
                "batch_size" => cfg.train.batch_size = num!(usize),
                "lr0" => cfg.train.lr0 = num!(f64),
                "momentum" => cfg.train.momentum = num!(f64),
                "weight_decay" => cfg.train.weight_decay = num!(f64),
                "label_smoothing" => cfg.train.label_smoothing = num!(f64),
                "restart_period" => cfg.train.restart_period = num!(usize),
                "lr_decay_on_restart" => cfg.train.lr_decay_on_restart = num!(f64),
                "squeeze_mode" => {
                    cfg.train.squeeze = SqueezeMode::parse(value)
                        .map_err(|e| CliError::Format(format!("line {lineno}: {e}")))?
                }
                "d" => cfg.train.d = num!(usize),
                "scale_factor" => cfg.train.scale_factor = num!(usize),
                "reduction" => cfg.train.reduction = num!(usize),
                "in_channels" => cfg.train.in_channels = num!(usize),
                other => {
                    return Err(CliError::Format(format!(
                        "line {lineno}: unknown key '{other}'"
                    )))
                }
            }
        }
        cfg.dataset = if use_idx {
            let (images, labels) = idx_paths.expect("set with use_idx");
            DatasetSource::Idx { images, labels }
        } else {
            DatasetSource::Synth { n: synth_n }
        };
        if !(0.0..=1.0).contains(&cfg.split_ratio) {
            return Err(CliError::Format(format!(
                "split_ratio must be in [0, 1], got {}",
                cfg.split_ratio
            )));
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Format(msg) => CliError::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Render as a parseable config file.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        match &self.dataset {
            DatasetSource::Synth { n } => {
                let _ = writeln!(s, "dataset = synth");
                let _ = writeln!(s, "n = {n}");
            }
            DatasetSource::Idx { images, labels } => {
                let _ = writeln!(s, "dataset = idx:{}:{}", images.display(), labels.display());
            }
        }
        let _ = writeln!(s, "classes = {}", t.classes);
        let _ = writeln!(s, "in_channels = {}", t.in_channels);
        let _ = writeln!(s, "split_ratio = {}", self.split_ratio);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "lr0 = {}", t.lr0);
        let _ = writeln!(s, "momentum = {}", t.momentum);
        let _ = writeln!(s, "weight_decay = {}", t.weight_decay);
        let _ = writeln!(s, "label_smoothing = {}", t.label_smoothing);
        let _ = writeln!(s, "restart_period = {}", t.restart_period);
        let _ = writeln!(s, "lr_decay_on_restart = {}", t.lr_decay_on_restart);
        let _ = writeln!(s, "squeeze_mode = {}", t.squeeze.as_str());
        let _ = writeln!(s, "d = {}", t.d);
        let _ = writeln!(s, "scale_factor = {}", t.scale_factor);
        let _ = writeln!(s, "reduction = {}", t.reduction);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        let parsed = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let err = RunConfig::parse("epochs = 3\nbogus_key = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2") && err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn malformed_value_names_the_line() {
        let err = RunConfig::parse("lr0 = fast\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("lr0"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# a comment\n\nepochs = 7 # trailing\n").unwrap();
        assert_eq!(cfg.train.epochs, 7);
    }

    #[test]
    fn idx_dataset_parses_paths() {
        let cfg = RunConfig::parse("dataset = idx:/tmp/i.idx:/tmp/l.idx\n").unwrap();
        assert_eq!(
            cfg.dataset,
            DatasetSource::Idx {
                images: PathBuf::from("/tmp/i.idx"),
                labels: PathBuf::from("/tmp/l.idx"),
            }
        );
    }

    #[test]
    fn invalid_train_values_bubble_up() {
        assert!(RunConfig::parse("label_smoothing = 1.5\n").is_err());
        assert!(RunConfig::parse("squeeze_mode = dct\n").is_err());
    }
}
