//! Minimal differentiable-network toolkit: convolution, batch norm, linear
//! and pooling layers with explicit backward passes, residual blocks with
//! embedded channel attention, label-smoothed cross-entropy, SGD with
//! momentum under a cosine warm-restart schedule, and a training loop.
//!
//! Layers own their parameters and the state saved by the last training
//! forward pass; gradients travel in a name-keyed map so the optimizer and
//! the parameter census see one flat view of the network.

mod block;
mod layers;
mod loss;
mod micro;
mod net;
mod optim;
mod train;

pub use block::BasicBlock;
pub use layers::{global_avg_pool, global_avg_pool_backward, BatchNorm, Conv2d, Linear};
pub use loss::cross_entropy_label_smoothing;
pub use micro::MicroNet;
pub use net::{build_classifier, build_classifier_with, Classifier};
pub use optim::{cosine_warm_restart_lr, SgdMomentum};
pub use train::{evaluate, train_classifier, EpochStats, TrainConfig};

use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Name-keyed gradient accumulator for one optimization step.
#[derive(Debug, Default)]
pub struct Grads(pub BTreeMap<String, Tensor>);

impl Grads {
    pub fn new() -> Self {
        Grads(BTreeMap::new())
    }

    /// Add `grad` into the slot for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, grad: Tensor) {
        match self.0.get_mut(name) {
            Some(t) => t.axpy(1.0, &grad).expect("gradient dims stable"),
            None => {
                self.0.insert(name.to_string(), grad);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }
}

/// Anything exposing a flat, named view of trainable parameters.
pub trait Parameterized {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    /// Non-trainable state that still belongs in checkpoints
    /// (batch-norm running statistics).
    fn visit_buffers(&self, _f: &mut dyn FnMut(&str, &Tensor)) {}
    fn visit_buffers_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor)) {}
}

/// Sorted (name, element count) listing of every trainable tensor.
pub fn census(net: &impl Parameterized) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    net.visit_params(&mut |name, t| out.push((name.to_string(), t.len())));
    out.sort();
    out
}

/// Total trainable element count.
pub fn param_total(net: &impl Parameterized) -> usize {
    census(net).iter().map(|(_, n)| n).sum()
}
