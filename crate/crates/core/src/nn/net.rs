//! The desk-scale classifier: stem convolution, four residual stages whose
//! widths are the channel groups divided by the configured scale factor,
//! one attention block per stage, global average pooling, and a linear head.

use std::sync::Arc;

use crate::attention::SqueezeMode;
use crate::error::{Error, Result};
use crate::filterbank::{build_assignment_scaled, FilterAssignment, GROUP_SIZES};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::block::BasicBlock;
use super::layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, Conv2d, Linear,
};
use super::train::TrainConfig;
use super::{Grads, Parameterized};

#[derive(Debug, Clone)]
pub struct Classifier {
    stem: Conv2d,
    stem_bn: BatchNorm,
    blocks: Vec<BasicBlock>,
    fc: Linear,
    assignment: Option<Arc<FilterAssignment>>,
    squeeze: SqueezeMode,
    in_channels: usize,
    classes: usize,
    stem_pre: Option<Tensor>,
    pool_in_dims: Option<Vec<usize>>,
}

/// Build a classifier from a training configuration.
///
/// The four stage widths are 64/s, 128/s, 256/s, 512/s; every stage halves
/// the spatial extent, so 32 x 32 inputs reach the head at 2 x 2. All
/// randomness (bank assignment, weight init) comes from the config seed.
pub fn build_classifier(cfg: &TrainConfig) -> Result<Classifier> {
    build_classifier_with(cfg, None)
}

/// `build_classifier`, but reusing an existing bank assignment instead of
/// drawing a fresh one (checkpoint loading restores banks this way).
pub fn build_classifier_with(
    cfg: &TrainConfig,
    assignment: Option<Arc<FilterAssignment>>,
) -> Result<Classifier> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let widths: Vec<usize> = GROUP_SIZES.iter().map(|g| g / cfg.scale_factor).collect();
    for &w in &widths {
        if w == 0 || w % cfg.reduction != 0 {
            return Err(Error::InvalidArgument(format!(
                "stage width {w} (scale {}) must be a positive multiple of reduction {}",
                cfg.scale_factor, cfg.reduction
            )));
        }
    }
    let assignment = match (cfg.squeeze, assignment) {
        (SqueezeMode::WavenetC, Some(a)) => Some(a),
        (SqueezeMode::WavenetC, None) => Some(Arc::new(build_assignment_scaled(
            &mut rng,
            cfg.d,
            cfg.scale_factor,
        )?)),
        (_, _) => None,
    };
    let stem = Conv2d::new(&mut rng, cfg.in_channels, widths[0], 3, 1, 1);
    let stem_bn = BatchNorm::new(widths[0]);
    let mut blocks = Vec::with_capacity(4);
    let mut c_in = widths[0];
    for (i, &c_out) in widths.iter().enumerate() {
        blocks.push(BasicBlock::new(
            &mut rng,
            &format!("stage{}", i + 1),
            c_in,
            c_out,
            2,
            cfg.squeeze,
            cfg.reduction,
            assignment.clone(),
        )?);
        c_in = c_out;
    }
    let fc = Linear::new(&mut rng, c_in, cfg.classes);
    Ok(Classifier {
        stem,
        stem_bn,
        blocks,
        fc,
        assignment,
        squeeze: cfg.squeeze,
        in_channels: cfg.in_channels,
        classes: cfg.classes,
        stem_pre: None,
        pool_in_dims: None,
    })
}

impl Classifier {
    pub fn squeeze_mode(&self) -> SqueezeMode {
        self.squeeze
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn assignment(&self) -> Option<&Arc<FilterAssignment>> {
        self.assignment.as_ref()
    }

    pub fn blocks(&self) -> &[BasicBlock] {
        &self.blocks
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        if x.ndim() != 4 || x.dims()[1] != self.in_channels {
            return Err(Error::Shape(format!(
                "classifier expects N x {} x H x W input, got {:?}",
                self.in_channels,
                x.dims()
            )));
        }
        let t = self.stem_bn.forward(&self.stem.forward(x, train)?, train)?;
        let mut cur = relu(&t);
        self.stem_pre = train.then(|| t);
        for block in &mut self.blocks {
            cur = block.forward(&cur, train)?;
        }
        self.pool_in_dims = train.then(|| cur.dims().to_vec());
        let pooled = global_avg_pool(&cur)?;
        self.fc.forward(&pooled, train)
    }

    pub fn backward(&mut self, grad_logits: &Tensor, grads: &mut Grads) -> Result<()> {
        let g = self.fc.backward(grad_logits, grads, "head.fc")?;
        let pool_dims = self.pool_in_dims.take().ok_or_else(|| {
            Error::InvalidArgument("classifier backward without forward".into())
        })?;
        let mut g = global_avg_pool_backward(&g, &pool_dims)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g, grads)?;
        }
        let stem_pre = self.stem_pre.take().expect("saved with pool dims");
        let g = relu_backward(&g, &stem_pre);
        let g = self.stem_bn.backward(&g, grads, "stem.bn")?;
        self.stem.backward(&g, grads, "stem.conv")?;
        Ok(())
    }

    /// Eval-mode forward that records the L2 norm after every stage; used
    /// for the diagnostic dump when training hits a non-finite loss.
    pub fn forward_trace(&mut self, x: &Tensor) -> Result<Vec<(String, f64)>> {
        let mut trace = Vec::new();
        let t = self.stem_bn.forward(&self.stem.forward(x, false)?, false)?;
        let mut cur = relu(&t);
        trace.push(("stem".to_string(), cur.norm_sq().sqrt()));
        for (i, block) in self.blocks.iter_mut().enumerate() {
            cur = block.forward(&cur, false)?;
            trace.push((format!("stage{}", i + 1), cur.norm_sq().sqrt()));
        }
        let pooled = global_avg_pool(&cur)?;
        let logits = self.fc.forward(&pooled, false)?;
        trace.push(("head".to_string(), logits.norm_sq().sqrt()));
        Ok(trace)
    }
}

impl Parameterized for Classifier {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("stem.conv.w", &self.stem.weight);
        f("stem.bn.gamma", &self.stem_bn.gamma);
        f("stem.bn.beta", &self.stem_bn.beta);
        for block in &self.blocks {
            block.visit_params(f);
        }
        f("head.fc.w", &self.fc.weight);
        f("head.fc.b", &self.fc.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("stem.conv.w", &mut self.stem.weight);
        f("stem.bn.gamma", &mut self.stem_bn.gamma);
        f("stem.bn.beta", &mut self.stem_bn.beta);
        for block in &mut self.blocks {
            block.visit_params_mut(f);
        }
        f("head.fc.w", &mut self.fc.weight);
        f("head.fc.b", &mut self.fc.bias);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("stem.bn.running_mean", &self.stem_bn.running_mean);
        f("stem.bn.running_var", &self.stem_bn.running_var);
        for block in &self.blocks {
            block.visit_buffers(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("stem.bn.running_mean", &mut self.stem_bn.running_mean);
        f("stem.bn.running_var", &mut self.stem_bn.running_var);
        for block in &mut self.blocks {
            block.visit_buffers_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{census, param_total};

    fn cfg(mode: SqueezeMode) -> TrainConfig {
        TrainConfig {
            squeeze: mode,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn forward_shape_8x1x32x32_to_8xk() {
        let mut net = build_classifier(&cfg(SqueezeMode::Gap)).unwrap();
        let x = Tensor::zeros(&[8, 1, 32, 32]);
        let logits = net.forward(&x, false).unwrap();
        assert_eq!(logits.dims(), &[8, 4]);
    }

    #[test]
    fn census_gap_equals_wavenet_c() {
        let gap = build_classifier(&cfg(SqueezeMode::Gap)).unwrap();
        let wc = build_classifier(&cfg(SqueezeMode::WavenetC)).unwrap();
        assert_eq!(census(&gap), census(&wc));
    }

    #[test]
    fn census_wavenet_adds_four_per_attention_block() {
        let gap = build_classifier(&cfg(SqueezeMode::Gap)).unwrap();
        let wn = build_classifier(&cfg(SqueezeMode::Wavenet)).unwrap();
        assert_eq!(
            param_total(&wn),
            param_total(&gap) + 4 * gap.blocks().len()
        );
    }

    #[test]
    fn bank_tensors_never_appear_in_the_census() {
        let wc = build_classifier(&cfg(SqueezeMode::WavenetC)).unwrap();
        assert!(wc.assignment().is_some());
        for (name, _) in census(&wc) {
            assert!(!name.contains("filters"), "bank leaked into census: {name}");
        }
    }

    #[test]
    fn invalid_scale_factor_rejected() {
        let mut c = cfg(SqueezeMode::Gap);
        c.scale_factor = 5;
        assert!(build_classifier(&c).is_err());
        c.scale_factor = 128; // width would be 0
        assert!(build_classifier(&c).is_err());
    }

    #[test]
    fn forward_trace_reports_every_stage() {
        let mut net = build_classifier(&cfg(SqueezeMode::Gap)).unwrap();
        let x = Tensor::zeros(&[2, 1, 32, 32]);
        let trace = net.forward_trace(&x).unwrap();
        let names: Vec<&str> = trace.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["stem", "stage1", "stage2", "stage3", "stage4", "head"]);
    }
}
