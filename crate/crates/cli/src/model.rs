//! Mapping between in-memory models and checkpoint entries.
//!
//! A classifier checkpoint holds: every trainable parameter under its
//! census name, batch-norm running statistics, the wavelet banks of the
//! filter assignment under `filters.<slot>.<band>`, and `meta.*` scalars
//! describing the architecture so `load_classifier` can rebuild it.

use std::sync::Arc;

use wavenet_core::attention::SqueezeMode;
use wavenet_core::filterbank::FilterAssignment;
use wavenet_core::nn::{build_classifier_with, Classifier, Parameterized, TrainConfig};
use wavenet_core::wavelet::{NormMode, WaveletBank};
use wavenet_core::Tensor;

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, Result};

const BAND_NAMES: [&str; 4] = ["a", "v", "h", "d"];

/// Store an assignment's banks plus its geometry.
pub fn assignment_into(ck: &mut Checkpoint, assignment: &FilterAssignment) -> Result<()> {
    ck.insert("filters.d", scalar(assignment.d() as f64))?;
    ck.insert("filters.scale", scalar(assignment.scale() as f64))?;
    for (slot, bank) in assignment.labeled_banks() {
        for (band, filter) in BAND_NAMES.iter().zip(bank.filters()) {
            ck.insert(&format!("filters.{slot}.{band}"), filter.clone())?;
        }
    }
    Ok(())
}

/// Rebuild an assignment from checkpoint entries.
pub fn assignment_from(ck: &Checkpoint) -> Result<FilterAssignment> {
    let d = ck.require_scalar("filters.d")? as usize;
    let scale = ck.require_scalar("filters.scale")? as usize;
    let load_bank = |slot: &str| -> Result<WaveletBank> {
        let mut filters = Vec::with_capacity(4);
        for band in BAND_NAMES {
            filters.push(ck.require(&format!("filters.{slot}.{band}"))?.clone());
        }
        let arr: [Tensor; 4] = filters.try_into().expect("four filters");
        WaveletBank::from_filters(arr, NormMode::Orthonormal).map_err(CliError::Core)
    };
    let group_banks = [
        load_bank("g64")?,
        load_bank("g128")?,
        load_bank("g256")?,
        load_bank("g512")?,
    ];
    let extra_banks = [
        load_bank("x0")?,
        load_bank("x1")?,
        load_bank("x2")?,
        load_bank("x3")?,
    ];
    FilterAssignment::from_parts(d, scale, group_banks, extra_banks).map_err(CliError::Core)
}

fn scalar(v: f64) -> Tensor {
    Tensor::new(&[1], vec![v]).expect("scalar tensor")
}

/// Serialize a trained classifier and the config facts needed to rebuild it.
pub fn save_classifier(net: &Classifier, cfg: &TrainConfig) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new();
    let mut entries: Vec<(String, Tensor)> = Vec::new();
    net.visit_params(&mut |name, t| entries.push((name.to_string(), t.clone())));
    net.visit_buffers(&mut |name, t| entries.push((name.to_string(), t.clone())));
    for (name, t) in entries {
        ck.insert(&name, t)?;
    }
    if let Some(assignment) = net.assignment() {
        assignment_into(&mut ck, assignment)?;
    }
    ck.insert("meta.squeeze", scalar(cfg.squeeze.code() as f64))?;
    ck.insert("meta.d", scalar(cfg.d as f64))?;
    ck.insert("meta.scale_factor", scalar(cfg.scale_factor as f64))?;
    ck.insert("meta.reduction", scalar(cfg.reduction as f64))?;
    ck.insert("meta.classes", scalar(cfg.classes as f64))?;
    ck.insert("meta.in_channels", scalar(cfg.in_channels as f64))?;
    Ok(ck)
}

/// Rebuild a classifier from a checkpoint produced by `save_classifier`.
pub fn load_classifier(ck: &Checkpoint) -> Result<Classifier> {
    let squeeze = SqueezeMode::from_code(ck.require_scalar("meta.squeeze")? as u32)?;
    let cfg = TrainConfig {
        squeeze,
        d: ck.require_scalar("meta.d")? as usize,
        scale_factor: ck.require_scalar("meta.scale_factor")? as usize,
        reduction: ck.require_scalar("meta.reduction")? as usize,
        classes: ck.require_scalar("meta.classes")? as usize,
        in_channels: ck.require_scalar("meta.in_channels")? as usize,
        ..TrainConfig::default()
    };
    let assignment = match squeeze {
        SqueezeMode::WavenetC => Some(Arc::new(assignment_from(ck)?)),
        _ => None,
    };
    let mut net = build_classifier_with(&cfg, assignment)?;
    let mut missing: Vec<String> = Vec::new();
    let mut restore = |name: &str, t: &mut Tensor| {
        match ck.get(name) {
            Some(stored) if stored.dims() == t.dims() => {
                t.data_mut().copy_from_slice(stored.data())
            }
            Some(stored) => missing.push(format!(
                "{name}: dims {:?} in file, {:?} in model",
                stored.dims(),
                t.dims()
            )),
            None => missing.push(format!("{name}: absent")),
        };
    };
    net.visit_params_mut(&mut |name, t| restore(name, t));
    net.visit_buffers_mut(&mut |name, t| restore(name, t));
    if !missing.is_empty() {
        return Err(CliError::Format(format!(
            "checkpoint does not match the model: {}",
            missing.join("; ")
        )));
    }
    Ok(net)
}
