//! Individual differentiable layers. Each layer owns its parameters and the
//! input it saved during the last training-mode forward call; backward
//! consumes that state, pushes parameter gradients into the `Grads` map
//! under the caller's name prefix, and returns the input gradient.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{self, Tensor};

use super::Grads;

/// 2D convolution with square kernels, optional zero padding, no bias
/// (batch norm follows every convolution in this crate).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    stride: usize,
    pad: usize,
    saved: Option<Tensor>,
}

impl Conv2d {
    /// Kaiming fan-in initialization: N(0, 2 / (c_in * k * k)).
    pub fn new(rng: &mut Rng, c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize) -> Self {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        let mut weight = Tensor::zeros(&[c_out, c_in, k, k]);
        weight.data_mut().iter_mut().for_each(|v| *v = rng.normal() * std);
        Conv2d {
            weight,
            stride,
            pad,
            saved: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let padded = tensor::zero_pad_nchw(x, self.pad)?;
        let out = tensor::conv2d(&padded, &self.weight, self.stride, 1)?;
        self.saved = train.then_some(padded);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor, grads: &mut Grads, name: &str) -> Result<Tensor> {
        let padded = self.saved.take().ok_or_else(|| {
            Error::InvalidArgument(format!("{name}: backward without saved forward state"))
        })?;
        let gw = tensor::conv2d_backward_filters(
            &padded,
            grad_out,
            self.stride,
            1,
            self.weight.dims(),
        )?;
        grads.accumulate(&format!("{name}.w"), gw);
        let g_pad =
            tensor::conv2d_backward_input(grad_out, &self.weight, self.stride, 1, padded.dims())?;
        tensor::crop_nchw(&g_pad, self.pad)
    }
}

#[derive(Debug, Clone)]
struct BnSaved {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Per-channel batch normalization with running statistics.
///
/// Training mode normalizes with biased batch statistics and updates the
/// running estimates; eval mode is the fixed affine map written in terms of
/// the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    momentum: f64,
    eps: f64,
    saved: Option<BnSaved>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            momentum: 0.1,
            eps: 1e-5,
            saved: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        if x.ndim() != 4 || x.dims()[1] != self.gamma.len() {
            return Err(Error::Shape(format!(
                "batchnorm expects N x {} x H x W, got {:?}",
                self.gamma.len(),
                x.dims()
            )));
        }
        let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut out = Tensor::zeros(x.dims());

        if train {
            let mut xhat = Tensor::zeros(x.dims());
            let mut inv_stds = vec![0.0; c];
            for ci in 0..c {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for &v in &x.data()[base..base + plane] {
                        sum += v;
                        sum_sq += v * v;
                    }
                }
                let mean = sum / count;
                let var = (sum_sq / count - mean * mean).max(0.0);
                let inv_std = 1.0 / (var + self.eps).sqrt();
                inv_stds[ci] = inv_std;
                let (g, b) = (self.gamma.data()[ci], self.beta.data()[ci]);
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for i in base..base + plane {
                        let xh = (x.data()[i] - mean) * inv_std;
                        xhat.data_mut()[i] = xh;
                        out.data_mut()[i] = g * xh + b;
                    }
                }
                let m = self.momentum;
                self.running_mean.data_mut()[ci] =
                    (1.0 - m) * self.running_mean.data()[ci] + m * mean;
                self.running_var.data_mut()[ci] =
                    (1.0 - m) * self.running_var.data()[ci] + m * var;
            }
            self.saved = Some(BnSaved {
                xhat,
                inv_std: inv_stds,
            });
        } else {
            for ci in 0..c {
                let mean = self.running_mean.data()[ci];
                let inv_std = 1.0 / (self.running_var.data()[ci] + self.eps).sqrt();
                let (g, b) = (self.gamma.data()[ci], self.beta.data()[ci]);
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for i in base..base + plane {
                        out.data_mut()[i] = g * (x.data()[i] - mean) * inv_std + b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor, grads: &mut Grads, name: &str) -> Result<Tensor> {
        let saved = self.saved.take().ok_or_else(|| {
            Error::InvalidArgument(format!("{name}: backward without saved forward state"))
        })?;
        let (n, c, h, w) = (
            grad_out.dims()[0],
            grad_out.dims()[1],
            grad_out.dims()[2],
            grad_out.dims()[3],
        );
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut g_gamma = Tensor::zeros(&[c]);
        let mut g_beta = Tensor::zeros(&[c]);
        let mut g_in = Tensor::zeros(grad_out.dims());
        for ci in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    sum_g += grad_out.data()[i];
                    sum_gx += grad_out.data()[i] * saved.xhat.data()[i];
                }
            }
            g_gamma.data_mut()[ci] = sum_gx;
            g_beta.data_mut()[ci] = sum_g;
            let k = self.gamma.data()[ci] * saved.inv_std[ci];
            let mean_g = sum_g / count;
            let mean_gx = sum_gx / count;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    g_in.data_mut()[i] = k
                        * (grad_out.data()[i]
                            - mean_g
                            - saved.xhat.data()[i] * mean_gx);
                }
            }
        }
        grads.accumulate(&format!("{name}.gamma"), g_gamma);
        grads.accumulate(&format!("{name}.beta"), g_beta);
        Ok(g_in)
    }
}

/// Fully connected layer with bias.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
    saved: Option<Tensor>,
}

impl Linear {
    pub fn new(rng: &mut Rng, c_in: usize, c_out: usize) -> Self {
        let std = (2.0 / c_in as f64).sqrt();
        let mut weight = Tensor::zeros(&[c_out, c_in]);
        weight.data_mut().iter_mut().for_each(|v| *v = rng.normal() * std);
        Linear {
            weight,
            bias: Tensor::zeros(&[c_out]),
            saved: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut out = tensor::matmul(x, &self.weight.transpose()?)?;
        let k = self.bias.len();
        for row in out.data_mut().chunks_mut(k) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        self.saved = train.then(|| x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor, grads: &mut Grads, name: &str) -> Result<Tensor> {
        let x = self.saved.take().ok_or_else(|| {
            Error::InvalidArgument(format!("{name}: backward without saved forward state"))
        })?;
        let gw = tensor::matmul(&grad_out.transpose()?, &x)?;
        let k = self.bias.len();
        let mut gb = Tensor::zeros(&[k]);
        for row in grad_out.data().chunks(k) {
            for (g, &v) in gb.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        grads.accumulate(&format!("{name}.w"), gw);
        grads.accumulate(&format!("{name}.b"), gb);
        tensor::matmul(grad_out, &self.weight)
    }
}

/// ReLU applied to a fresh tensor; the caller keeps the pre-activation for
/// the backward mask.
pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    out
}

/// grad * 1[pre > 0], elementwise.
pub fn relu_backward(grad: &Tensor, pre: &Tensor) -> Tensor {
    let mut out = grad.clone();
    for (g, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// N x C x H x W -> N x C spatial mean.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "global_avg_pool expects 4-D input, got {:?}",
            x.dims()
        )));
    }
    let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, c]);
    for nc in 0..n * c {
        out.data_mut()[nc] =
            x.data()[nc * plane..(nc + 1) * plane].iter().sum::<f64>() / plane as f64;
    }
    Ok(out)
}

pub fn global_avg_pool_backward(grad: &Tensor, in_dims: &[usize]) -> Result<Tensor> {
    let (h, w) = (in_dims[2], in_dims[3]);
    let plane = h * w;
    let mut out = Tensor::zeros(in_dims);
    for nc in 0..grad.len() {
        let v = grad.data()[nc] / plane as f64;
        out.data_mut()[nc * plane..(nc + 1) * plane]
            .iter_mut()
            .for_each(|o| *o = v);
    }
    Ok(out)
}
