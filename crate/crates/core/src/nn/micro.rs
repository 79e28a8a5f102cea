//! Two-convolution micro network used for full-network finite-difference
//! gradient verification: small enough to probe every parameter, but it
//! exercises every layer kind (conv, batch norm, relu, attention, pooling,
//! linear head) in one composed backward pass.

use std::sync::Arc;

use crate::attention::{AttentionBlock, AttentionState, SqueezeMode};
use crate::error::{Error, Result};
use crate::filterbank::FilterAssignment;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, Conv2d, Linear,
};
use super::{Grads, Parameterized};

#[derive(Debug, Clone)]
pub struct MicroNet {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    att: AttentionBlock,
    fc: Linear,
    pre1: Option<Tensor>,
    pre2: Option<Tensor>,
    att_state: Option<AttentionState>,
    pool_in_dims: Option<Vec<usize>>,
    input_dims: Option<Vec<usize>>,
}

impl MicroNet {
    /// conv3x3(1 -> 4) - bn - relu - conv3x3/2(4 -> 8) - bn - relu ->
    /// attention(C = 8) -> global pool -> fc(8 -> classes).
    pub fn new(
        rng: &mut Rng,
        mode: SqueezeMode,
        classes: usize,
        assignment: Option<Arc<FilterAssignment>>,
    ) -> Result<Self> {
        Ok(MicroNet {
            conv1: Conv2d::new(rng, 1, 4, 3, 1, 1),
            bn1: BatchNorm::new(4),
            conv2: Conv2d::new(rng, 4, 8, 3, 2, 1),
            bn2: BatchNorm::new(8),
            att: AttentionBlock::new(8, 2, mode, assignment, rng)?,
            fc: Linear::new(rng, 8, classes),
            pre1: None,
            pre2: None,
            att_state: None,
            pool_in_dims: None,
            input_dims: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.input_dims = train.then(|| x.dims().to_vec());
        let t = self.bn1.forward(&self.conv1.forward(x, train)?, train)?;
        let a1 = relu(&t);
        self.pre1 = train.then(|| t);
        let t = self.bn2.forward(&self.conv2.forward(&a1, train)?, train)?;
        let a2 = relu(&t);
        self.pre2 = train.then(|| t);
        let (scaled, att_state) = self.att.forward(&a2)?;
        if train {
            self.att_state = Some(att_state);
        }
        self.pool_in_dims = train.then(|| scaled.dims().to_vec());
        let pooled = global_avg_pool(&scaled)?;
        self.fc.forward(&pooled, train)
    }

    /// Returns the gradient with respect to the network input.
    pub fn backward(&mut self, grad_logits: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        let g = self.fc.backward(grad_logits, grads, "fc")?;
        let pool_dims = self
            .pool_in_dims
            .take()
            .ok_or_else(|| Error::InvalidArgument("micro backward without forward".into()))?;
        let g = global_avg_pool_backward(&g, &pool_dims)?;
        let att_state = self.att_state.take().expect("saved with pool dims");
        let (g, att_grads) = self.att.backward(&att_state, &g)?;
        grads.accumulate("att.w1", att_grads.w1);
        grads.accumulate("att.w2", att_grads.w2);
        if let Some(gc) = att_grads.combine {
            grads.accumulate("att.combine", gc);
        }
        let pre2 = self.pre2.take().expect("saved");
        let g = relu_backward(&g, &pre2);
        let g = self.bn2.backward(&g, grads, "bn2")?;
        let g = self.conv2.backward(&g, grads, "conv2")?;
        let pre1 = self.pre1.take().expect("saved");
        let g = relu_backward(&g, &pre1);
        let g = self.bn1.backward(&g, grads, "bn1")?;
        self.conv1.backward(&g, grads, "conv1")
    }
}

impl Parameterized for MicroNet {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("conv1.w", &self.conv1.weight);
        f("bn1.gamma", &self.bn1.gamma);
        f("bn1.beta", &self.bn1.beta);
        f("conv2.w", &self.conv2.weight);
        f("bn2.gamma", &self.bn2.gamma);
        f("bn2.beta", &self.bn2.beta);
        f("att.w1", &self.att.w1);
        f("att.w2", &self.att.w2);
        if let Some(c) = &self.att.combine {
            f("att.combine", c);
        }
        f("fc.w", &self.fc.weight);
        f("fc.b", &self.fc.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("conv1.w", &mut self.conv1.weight);
        f("bn1.gamma", &mut self.bn1.gamma);
        f("bn1.beta", &mut self.bn1.beta);
        f("conv2.w", &mut self.conv2.weight);
        f("bn2.gamma", &mut self.bn2.gamma);
        f("bn2.beta", &mut self.bn2.beta);
        f("att.w1", &mut self.att.w1);
        f("att.w2", &mut self.att.w2);
        if let Some(c) = &mut self.att.combine {
            f("att.combine", c);
        }
        f("fc.w", &mut self.fc.weight);
        f("fc.b", &mut self.fc.bias);
    }
}
