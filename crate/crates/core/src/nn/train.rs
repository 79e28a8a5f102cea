//! Training configuration and the end-to-end loop: shuffled mini-batches,
//! label-smoothed cross-entropy, SGD momentum stepped along the cosine
//! warm-restart schedule, and per-epoch train/test statistics.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::attention::SqueezeMode;

use super::loss::{count_correct, cross_entropy_label_smoothing};
use super::net::{build_classifier, Classifier};
use super::optim::{cosine_warm_restart_lr, SgdMomentum};
use super::Grads;

/// Everything a training run depends on. Identical configs produce
/// identical runs, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    /// Epochs per cosine period.
    pub restart_period: usize,
    /// Peak multiplier applied at each restart.
    pub lr_decay_on_restart: f64,
    pub seed: u64,
    pub squeeze: SqueezeMode,
    /// Wavelet filter side length for generated banks.
    pub d: usize,
    /// Channel widths are the nominal groups divided by this factor.
    pub scale_factor: usize,
    /// Excitation bottleneck ratio.
    pub reduction: usize,
    pub classes: usize,
    pub in_channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr0: 0.08,
            momentum: 0.9,
            weight_decay: 1e-4,
            label_smoothing: 0.1,
            restart_period: 10,
            lr_decay_on_restart: 0.9,
            seed: 1,
            squeeze: SqueezeMode::WavenetC,
            d: 2,
            scale_factor: 8,
            reduction: 4,
            classes: 4,
            in_channels: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("restart_period", self.restart_period),
            ("reduction", self.reduction),
            ("classes", self.classes),
            ("scale_factor", self.scale_factor),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("lr0", self.lr0),
            ("momentum", self.momentum),
            ("lr_decay_on_restart", self.lr_decay_on_restart),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.lr0 <= 0.0 {
            return Err(Error::InvalidArgument("lr0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument(format!(
                "label_smoothing must lie in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        if !(2..=5).contains(&self.d) {
            return Err(Error::InvalidArgument(format!(
                "filter size d must be in 2..=5, got {}",
                self.d
            )));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "in_channels must be 1 or 3, got {}",
                self.in_channels
            )));
        }
        Ok(())
    }
}

/// One row of the per-epoch metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

impl EpochStats {
    pub fn csv_header() -> &'static str {
        "epoch,lr,train_loss,train_acc,test_loss,test_acc"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{:.4},{:.6e},{:.4}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.test_loss, self.test_acc
        )
    }
}

/// Mean loss and top-1 accuracy of `net` on `ds`, eval mode.
pub fn evaluate(
    net: &mut Classifier,
    ds: &Dataset,
    batch_size: usize,
    label_smoothing: f64,
) -> Result<(f64, f64)> {
    let n = ds.len();
    let mut total_loss = 0.0;
    let mut correct = 0;
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(batch_size) {
        let (x, labels) = ds.batch(chunk);
        let logits = net.forward(&x, false)?;
        let (loss, _) = cross_entropy_label_smoothing(&logits, &labels, label_smoothing)?;
        total_loss += loss * chunk.len() as f64;
        correct += count_correct(&logits, &labels);
    }
    Ok((total_loss / n as f64, correct as f64 / n as f64))
}

/// Train a fresh classifier on `train`, evaluating on `test` after every
/// epoch. `on_epoch` sees each stats row as it is produced.
pub fn train_classifier(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Classifier, Vec<EpochStats>)> {
    cfg.validate()?;
    if train.classes != cfg.classes {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, config expects {}",
            train.classes, cfg.classes
        )));
    }
    let mut net = build_classifier(cfg)?;
    let mut opt = SgdMomentum::new();
    let mut shuffle_rng = Rng::new(cfg.seed ^ 0x9e3779b97f4a7c15);
    let n = train.len();
    let batches = n.div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut correct = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = train.batch(chunk);
            let logits = net.forward(&x, true)?;
            let (loss, dlogits) =
                cross_entropy_label_smoothing(&logits, &labels, cfg.label_smoothing)?;
            if !loss.is_finite() {
                let trace = net.forward_trace(&x)?;
                let dump: Vec<String> =
                    trace.iter().map(|(n, v)| format!("{n}={v:.3e}")).collect();
                return Err(Error::NonFinite(format!(
                    "loss {loss} at epoch {epoch} batch {bi}; layer output norms: {}",
                    dump.join(", ")
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            correct += count_correct(&logits, &labels);
            let mut grads = Grads::new();
            net.backward(&dlogits, &mut grads)?;
            let epoch_f = epoch as f64 + bi as f64 / batches as f64;
            let lr = cosine_warm_restart_lr(
                cfg.lr0,
                cfg.restart_period,
                cfg.lr_decay_on_restart,
                epoch_f,
            );
            opt.step(&mut net, &grads, lr, cfg.momentum, cfg.weight_decay);
        }
        let (test_loss, test_acc) =
            evaluate(&mut net, test, cfg.batch_size, cfg.label_smoothing)?;
        let stats = EpochStats {
            epoch,
            lr: cosine_warm_restart_lr(
                cfg.lr0,
                cfg.restart_period,
                cfg.lr_decay_on_restart,
                epoch as f64,
            ),
            train_loss: epoch_loss / n as f64,
            train_acc: correct as f64 / n as f64,
            test_loss,
            test_acc,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{mean_std, normalize, split, synth_textures};

    fn tiny_cfg(mode: SqueezeMode, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            squeeze: mode,
            ..TrainConfig::default()
        }
    }

    fn tiny_data() -> (Dataset, Dataset) {
        let ds = synth_textures(3, 160, 4).unwrap();
        let (train, test) = split(&ds, 0.75, 3).unwrap();
        let (m, s) = mean_std(&train);
        (
            normalize(&train, m, s).unwrap(),
            normalize(&test, m, s).unwrap(),
        )
    }

    #[test]
    fn loss_decreases_for_every_squeeze_mode() {
        let (train, test) = tiny_data();
        for mode in SqueezeMode::all() {
            let cfg = tiny_cfg(mode, 3);
            let (_, history) = train_classifier(&cfg, &train, &test, |_| {}).unwrap();
            let first = history.first().unwrap().train_loss;
            let last = history.last().unwrap().train_loss;
            assert!(
                last < first,
                "{}: loss went {first} -> {last}",
                mode.as_str()
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (train, test) = tiny_data();
        let cfg = tiny_cfg(SqueezeMode::Gap, 2);
        let (_, h1) = train_classifier(&cfg, &train, &test, |_| {}).unwrap();
        let (_, h2) = train_classifier(&cfg, &train, &test, |_| {}).unwrap();
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a.train_loss - b.train_loss).abs() <= 1e-12);
            assert!((a.test_loss - b.test_loss).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_row_has_six_fields() {
        let stats = EpochStats {
            epoch: 3,
            lr: 0.1,
            train_loss: 1.0,
            train_acc: 0.5,
            test_loss: 1.1,
            test_acc: 0.4,
        };
        assert_eq!(EpochStats::csv_header().split(',').count(), 6);
        assert_eq!(stats.csv_row().split(',').count(), 6);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.label_smoothing = 1.0;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.d = 7;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.in_channels = 2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mismatched_class_count_rejected() {
        let (train, test) = tiny_data();
        let mut cfg = tiny_cfg(SqueezeMode::Gap, 1);
        cfg.classes = 7;
        assert!(train_classifier(&cfg, &train, &test, |_| {}).is_err());
    }
}
