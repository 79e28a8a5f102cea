//! Residual basic block with embedded channel attention:
//! conv-bn-relu-conv-bn -> attention rescale -> add shortcut -> relu.
//! The shortcut is a strided 1x1 convolution plus batch norm whenever the
//! block changes resolution or width.

use std::sync::Arc;

use crate::attention::{AttentionBlock, AttentionState, SqueezeMode};
use crate::error::{Error, Result};
use crate::filterbank::FilterAssignment;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::layers::{relu, relu_backward, BatchNorm, Conv2d};
use super::Grads;

#[derive(Debug, Clone)]
pub struct BasicBlock {
    name: String,
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    att: AttentionBlock,
    down: Option<(Conv2d, BatchNorm)>,
    pre1: Option<Tensor>,
    att_state: Option<AttentionState>,
    sum_pre: Option<Tensor>,
}

impl BasicBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rng: &mut Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        mode: SqueezeMode,
        reduction: usize,
        assignment: Option<Arc<FilterAssignment>>,
    ) -> Result<Self> {
        let conv1 = Conv2d::new(rng, c_in, c_out, 3, stride, 1);
        let bn1 = BatchNorm::new(c_out);
        let conv2 = Conv2d::new(rng, c_out, c_out, 3, 1, 1);
        let bn2 = BatchNorm::new(c_out);
        let att = AttentionBlock::new(c_out, reduction, mode, assignment, rng)?;
        let down = (stride != 1 || c_in != c_out)
            .then(|| (Conv2d::new(rng, c_in, c_out, 1, stride, 0), BatchNorm::new(c_out)));
        Ok(BasicBlock {
            name: name.to_string(),
            conv1,
            bn1,
            conv2,
            bn2,
            att,
            down,
            pre1: None,
            att_state: None,
            sum_pre: None,
        })
    }

    pub fn attention(&self) -> &AttentionBlock {
        &self.att
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let identity = match &mut self.down {
            Some((conv, bn)) => bn.forward(&conv.forward(x, train)?, train)?,
            None => x.clone(),
        };
        let t = self.bn1.forward(&self.conv1.forward(x, train)?, train)?;
        let activated = relu(&t);
        self.pre1 = train.then(|| t);
        let t = self.bn2.forward(&self.conv2.forward(&activated, train)?, train)?;
        let (scaled, att_state) = self.att.forward(&t)?;
        if train {
            self.att_state = Some(att_state);
        }
        let sum = scaled.add(&identity)?;
        let out = relu(&sum);
        self.sum_pre = train.then(|| sum);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        let sum_pre = self.sum_pre.take().ok_or_else(|| {
            Error::InvalidArgument(format!("{}: backward without forward", self.name))
        })?;
        let g = relu_backward(grad_out, &sum_pre);

        // Attention path.
        let att_state = self.att_state.take().ok_or_else(|| {
            Error::InvalidArgument(format!("{}: missing attention state", self.name))
        })?;
        let (g_t, att_grads) = self.att.backward(&att_state, &g)?;
        grads.accumulate(&format!("att.{}.w1", self.name), att_grads.w1);
        grads.accumulate(&format!("att.{}.w2", self.name), att_grads.w2);
        if let Some(gc) = att_grads.combine {
            grads.accumulate(&format!("att.{}.combine", self.name), gc);
        }

        let g_t = self.bn2.backward(&g_t, grads, &format!("{}.bn2", self.name))?;
        let g_t = self.conv2.backward(&g_t, grads, &format!("{}.conv2", self.name))?;
        let pre1 = self.pre1.take().expect("saved with sum_pre");
        let g_t = relu_backward(&g_t, &pre1);
        let g_t = self.bn1.backward(&g_t, grads, &format!("{}.bn1", self.name))?;
        let mut g_in = self.conv1.backward(&g_t, grads, &format!("{}.conv1", self.name))?;

        // Shortcut path.
        let g_short = match &mut self.down {
            Some((conv, bn)) => {
                let gd = bn.backward(&g, grads, &format!("{}.down.bn", self.name))?;
                conv.backward(&gd, grads, &format!("{}.down.conv", self.name))?
            }
            None => g,
        };
        g_in.axpy(1.0, &g_short)?;
        Ok(g_in)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        let n = &self.name;
        f(&format!("{n}.conv1.w"), &self.conv1.weight);
        f(&format!("{n}.bn1.gamma"), &self.bn1.gamma);
        f(&format!("{n}.bn1.beta"), &self.bn1.beta);
        f(&format!("{n}.conv2.w"), &self.conv2.weight);
        f(&format!("{n}.bn2.gamma"), &self.bn2.gamma);
        f(&format!("{n}.bn2.beta"), &self.bn2.beta);
        if let Some((conv, bn)) = &self.down {
            f(&format!("{n}.down.conv.w"), &conv.weight);
            f(&format!("{n}.down.bn.gamma"), &bn.gamma);
            f(&format!("{n}.down.bn.beta"), &bn.beta);
        }
        f(&format!("att.{n}.w1"), &self.att.w1);
        f(&format!("att.{n}.w2"), &self.att.w2);
        if let Some(c) = &self.att.combine {
            f(&format!("att.{n}.combine"), c);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let n = self.name.clone();
        f(&format!("{n}.conv1.w"), &mut self.conv1.weight);
        f(&format!("{n}.bn1.gamma"), &mut self.bn1.gamma);
        f(&format!("{n}.bn1.beta"), &mut self.bn1.beta);
        f(&format!("{n}.conv2.w"), &mut self.conv2.weight);
        f(&format!("{n}.bn2.gamma"), &mut self.bn2.gamma);
        f(&format!("{n}.bn2.beta"), &mut self.bn2.beta);
        if let Some((conv, bn)) = &mut self.down {
            f(&format!("{n}.down.conv.w"), &mut conv.weight);
            f(&format!("{n}.down.bn.gamma"), &mut bn.gamma);
            f(&format!("{n}.down.bn.beta"), &mut bn.beta);
        }
        f(&format!("att.{n}.w1"), &mut self.att.w1);
        f(&format!("att.{n}.w2"), &mut self.att.w2);
        if let Some(c) = &mut self.att.combine {
            f(&format!("att.{n}.combine"), c);
        }
    }

    pub fn visit_buffers(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        let n = &self.name;
        f(&format!("{n}.bn1.running_mean"), &self.bn1.running_mean);
        f(&format!("{n}.bn1.running_var"), &self.bn1.running_var);
        f(&format!("{n}.bn2.running_mean"), &self.bn2.running_mean);
        f(&format!("{n}.bn2.running_var"), &self.bn2.running_var);
        if let Some((_, bn)) = &self.down {
            f(&format!("{n}.down.bn.running_mean"), &bn.running_mean);
            f(&format!("{n}.down.bn.running_var"), &bn.running_var);
        }
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let n = self.name.clone();
        f(&format!("{n}.bn1.running_mean"), &mut self.bn1.running_mean);
        f(&format!("{n}.bn1.running_var"), &mut self.bn1.running_var);
        f(&format!("{n}.bn2.running_mean"), &mut self.bn2.running_mean);
        f(&format!("{n}.bn2.running_var"), &mut self.bn2.running_var);
        if let Some((_, bn)) = &mut self.down {
            f(&format!("{n}.down.bn.running_mean"), &mut bn.running_mean);
            f(&format!("{n}.down.bn.running_var"), &mut bn.running_var);
        }
    }
}
