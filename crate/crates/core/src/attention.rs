//! Channel attention: squeeze each channel to a scalar descriptor, gate the
//! descriptors through a bottlenecked two-layer excitation, and rescale the
//! channels by the resulting weights in (0, 1).
//!
//! Four squeeze variants are supported:
//! - `gap`: plain per-channel spatial mean;
//! - `haar`: recursive averaging-Haar approximation (agrees with `gap`);
//! - `wavenet`: per-level trainable linear combination of the four Haar
//!   subbands fed through the recursion, initialized to (1, 0, 0, 0);
//! - `wavenet_c`: grouped compression through fixed random orthonormal
//!   banks from a `FilterAssignment`, wide layers split into chunks.
//!
//! Every squeeze is linear in the input, so the backward pass is the
//! transposed linear map, unrolled level by level from the forward tape.
//! Wavelet bank filters are constants and receive no gradient.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::filterbank::{haar_bank, FilterAssignment};
use crate::rng::Rng;
use crate::tensor::{self, Tensor};
use crate::wavelet::{
    dwt2d_conv, pad_nchw_preserving_gap, pad_nchw_preserving_gap_backward, padded_extent,
    NormMode, Subbands, WaveletBank,
};

/// How a channel is compressed to its scalar descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqueezeMode {
    Gap,
    Haar,
    Wavenet,
    WavenetC,
}

impl SqueezeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gap" => Ok(SqueezeMode::Gap),
            "haar" => Ok(SqueezeMode::Haar),
            "wavenet" => Ok(SqueezeMode::Wavenet),
            "wavenet_c" => Ok(SqueezeMode::WavenetC),
            other => Err(Error::InvalidArgument(format!(
                "unknown squeeze mode '{other}' (expected gap|haar|wavenet|wavenet_c)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SqueezeMode::Gap => "gap",
            SqueezeMode::Haar => "haar",
            SqueezeMode::Wavenet => "wavenet",
            SqueezeMode::WavenetC => "wavenet_c",
        }
    }

    /// Stable numeric code used in checkpoints.
    pub fn code(&self) -> u32 {
        match self {
            SqueezeMode::Gap => 0,
            SqueezeMode::Haar => 1,
            SqueezeMode::Wavenet => 2,
            SqueezeMode::WavenetC => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(SqueezeMode::Gap),
            1 => Ok(SqueezeMode::Haar),
            2 => Ok(SqueezeMode::Wavenet),
            3 => Ok(SqueezeMode::WavenetC),
            other => Err(Error::InvalidArgument(format!(
                "unknown squeeze mode code {other}"
            ))),
        }
    }

    pub fn all() -> [SqueezeMode; 4] {
        [
            SqueezeMode::Gap,
            SqueezeMode::Haar,
            SqueezeMode::Wavenet,
            SqueezeMode::WavenetC,
        ]
    }
}

/// The trainable attention unit for one layer of C channels.
///
/// Trainable parameters are the two biasless excitation matrices
/// (2 * C^2 / r values) plus, in `wavenet` mode only, the four per-level
/// combination weights. Referenced wavelet banks are constants.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    channels: usize,
    reduction: usize,
    mode: SqueezeMode,
    /// (C/r) x C
    pub w1: Tensor,
    /// C x (C/r)
    pub w2: Tensor,
    /// Per-level subband combination weights, `wavenet` mode only.
    pub combine: Option<Tensor>,
    /// Shared bank assignment, `wavenet_c` mode only.
    assignment: Option<Arc<FilterAssignment>>,
    /// Averaging Haar bank for the `haar`/`wavenet` recursions.
    haar: Option<WaveletBank>,
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct AttentionState {
    x: Tensor,
    z: Tensor,
    pre: Tensor,
    hidden: Tensor,
    pub att: Tensor,
    tape: Vec<ChunkTape>,
}

/// Gradients of the block's trainable parameters.
#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub w1: Tensor,
    pub w2: Tensor,
    pub combine: Option<Tensor>,
}

#[derive(Debug, Clone)]
struct ChunkTape {
    c0: usize,
    c1: usize,
    levels: Vec<LevelRec>,
}

#[derive(Debug, Clone)]
struct LevelRec {
    in_h: usize,
    in_w: usize,
    pad_h: usize,
    pad_w: usize,
    /// Saved only when combination weights are trainable.
    subbands: Option<Subbands>,
}

impl AttentionBlock {
    pub fn new(
        channels: usize,
        reduction: usize,
        mode: SqueezeMode,
        assignment: Option<Arc<FilterAssignment>>,
        rng: &mut Rng,
    ) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::InvalidArgument(format!(
                "channels {channels} must be divisible by reduction {reduction}"
            )));
        }
        let hidden = channels / reduction;
        let kaiming = |rng: &mut Rng, rows: usize, cols: usize| {
            let std = (2.0 / cols as f64).sqrt();
            let mut t = Tensor::zeros(&[rows, cols]);
            t.data_mut().iter_mut().for_each(|v| *v = rng.normal() * std);
            t
        };
        let w1 = kaiming(rng, hidden, channels);
        let w2 = kaiming(rng, channels, hidden);
        let assignment = match mode {
            SqueezeMode::WavenetC => {
                let a = assignment.ok_or_else(|| {
                    Error::InvalidArgument(
                        "wavenet_c attention needs a filter assignment".into(),
                    )
                })?;
                a.chunk_banks(channels)?; // fail early on unsupported widths
                Some(a)
            }
            _ => None,
        };
        let combine = match mode {
            SqueezeMode::Wavenet => {
                Some(Tensor::new(&[4], vec![1.0, 0.0, 0.0, 0.0]).expect("4 weights"))
            }
            _ => None,
        };
        let haar = match mode {
            SqueezeMode::Haar | SqueezeMode::Wavenet => Some(haar_bank(NormMode::Averaging)),
            _ => None,
        };
        Ok(AttentionBlock {
            channels,
            reduction,
            mode,
            w1,
            w2,
            combine,
            assignment,
            haar,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn reduction(&self) -> usize {
        self.reduction
    }

    pub fn mode(&self) -> SqueezeMode {
        self.mode
    }

    pub fn assignment(&self) -> Option<&Arc<FilterAssignment>> {
        self.assignment.as_ref()
    }

    /// Number of trainable values in this block.
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.w2.len() + self.combine.as_ref().map_or(0, Tensor::len)
    }

    fn combine_weights(&self) -> [f64; 4] {
        match &self.combine {
            Some(t) => [t.data()[0], t.data()[1], t.data()[2], t.data()[3]],
            None => [1.0, 0.0, 0.0, 0.0],
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.ndim() != 4 || x.dims()[1] != self.channels {
            return Err(Error::Shape(format!(
                "attention expects N x {} x H x W input, got {:?}",
                self.channels,
                x.dims()
            )));
        }
        if self.mode != SqueezeMode::Gap && x.dims()[2] != x.dims()[3] {
            return Err(Error::Shape(format!(
                "wavelet squeeze needs square spatial dims, got {}x{}",
                x.dims()[2],
                x.dims()[3]
            )));
        }
        Ok(())
    }

    /// Per-channel scalar descriptors, N x C.
    pub fn squeeze(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.squeeze_with_tape(x)?.0)
    }

    fn squeeze_with_tape(&self, x: &Tensor) -> Result<(Tensor, Vec<ChunkTape>)> {
        self.check_input(x)?;
        let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
        match self.mode {
            SqueezeMode::Gap => {
                let mut z = Tensor::zeros(&[n, c]);
                let plane = h * w;
                for nc in 0..n * c {
                    let p = &x.data()[nc * plane..(nc + 1) * plane];
                    z.data_mut()[nc] = p.iter().sum::<f64>() / plane as f64;
                }
                Ok((z, Vec::new()))
            }
            SqueezeMode::Haar => {
                let bank = self.haar.as_ref().expect("haar bank present");
                let (out, tape) = compress_chunk(x, bank, None, false)?;
                Ok((out.reshape(&[n, c])?, vec![tape_for(0, c, tape)]))
            }
            SqueezeMode::Wavenet => {
                let bank = self.haar.as_ref().expect("haar bank present");
                let weights = self.combine_weights();
                let (out, tape) = compress_chunk(x, bank, Some(&weights), true)?;
                Ok((out.reshape(&[n, c])?, vec![tape_for(0, c, tape)]))
            }
            SqueezeMode::WavenetC => {
                let assignment = self.assignment.as_ref().expect("assignment present");
                let banks = assignment.chunk_banks(c)?;
                let chunk = c / banks.len();
                let mut z = Tensor::zeros(&[n, c]);
                let mut tapes = Vec::with_capacity(banks.len());
                for (i, bank) in banks.iter().enumerate() {
                    let (c0, c1) = (i * chunk, (i + 1) * chunk);
                    let part = x.slice_axis(1, c0, c1)?;
                    let (out, tape) = compress_chunk(&part, bank, None, false)?;
                    for ni in 0..n {
                        for ci in 0..chunk {
                            z.data_mut()[ni * c + c0 + ci] = out.data()[ni * chunk + ci];
                        }
                    }
                    tapes.push(tape_for(c0, c1, tape));
                }
                Ok((z, tapes))
            }
        }
    }

    /// Attention values sigmoid(w2 * relu(w1 * z)), strictly inside (0, 1).
    pub fn excite(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.excite_full(z)?.2)
    }

    fn excite_full(&self, z: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let pre = tensor::matmul(z, &self.w1.transpose()?)?;
        let mut hidden = pre.clone();
        hidden.data_mut().iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v = 0.0
            }
        });
        let mut att = tensor::matmul(&hidden, &self.w2.transpose()?)?;
        att.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok((pre, hidden, att))
    }

    /// Broadcast-multiply each channel of x by its attention value.
    pub fn scale(x: &Tensor, att: &Tensor) -> Result<Tensor> {
        if x.ndim() != 4 || att.dims() != [x.dims()[0], x.dims()[1]] {
            return Err(Error::Shape(format!(
                "scale: att dims {:?} do not match input {:?}",
                att.dims(),
                x.dims()
            )));
        }
        let plane = x.dims()[2] * x.dims()[3];
        let mut out = x.clone();
        for (nc, &a) in att.data().iter().enumerate() {
            for v in &mut out.data_mut()[nc * plane..(nc + 1) * plane] {
                *v *= a;
            }
        }
        Ok(out)
    }

    /// Full squeeze -> excite -> scale pass, returning the rescaled tensor
    /// and the state the backward pass consumes.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, AttentionState)> {
        let (z, tape) = self.squeeze_with_tape(x)?;
        let (pre, hidden, att) = self.excite_full(&z)?;
        let scaled = Self::scale(x, &att)?;
        Ok((
            scaled,
            AttentionState {
                x: x.clone(),
                z,
                pre,
                hidden,
                att,
                tape,
            },
        ))
    }

    /// Exact reverse-mode gradients of the composed map, including the path
    /// of the attention values back through the squeeze input.
    pub fn backward(
        &self,
        state: &AttentionState,
        grad_out: &Tensor,
    ) -> Result<(Tensor, AttentionGrads)> {
        if grad_out.dims() != state.x.dims() {
            return Err(Error::Shape(format!(
                "attention backward: grad dims {:?} vs saved input {:?}",
                grad_out.dims(),
                state.x.dims()
            )));
        }
        let (n, c, h, w) = (
            state.x.dims()[0],
            state.x.dims()[1],
            state.x.dims()[2],
            state.x.dims()[3],
        );
        let plane = h * w;

        // Scale stage: y = att (.) x.
        let mut g_att = Tensor::zeros(&[n, c]);
        let mut grad_x = grad_out.clone();
        for nc in 0..n * c {
            let xs = &state.x.data()[nc * plane..(nc + 1) * plane];
            let gs = &grad_out.data()[nc * plane..(nc + 1) * plane];
            g_att.data_mut()[nc] = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
            let a = state.att.data()[nc];
            for v in &mut grad_x.data_mut()[nc * plane..(nc + 1) * plane] {
                *v *= a;
            }
        }

        // Excitation stage.
        let mut g_logits = g_att;
        for (g, &a) in g_logits.data_mut().iter_mut().zip(state.att.data()) {
            *g *= a * (1.0 - a);
        }
        let g_w2 = tensor::matmul(&g_logits.transpose()?, &state.hidden)?;
        let mut g_pre = tensor::matmul(&g_logits, &self.w2)?;
        for (g, &p) in g_pre.data_mut().iter_mut().zip(state.pre.data()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let g_w1 = tensor::matmul(&g_pre.transpose()?, &state.z)?;
        let g_z = tensor::matmul(&g_pre, &self.w1)?;

        // Squeeze stage (linear in x): transposed map.
        let mut g_combine = self.combine.as_ref().map(|_| Tensor::zeros(&[4]));
        match self.mode {
            SqueezeMode::Gap => {
                let inv = 1.0 / plane as f64;
                for nc in 0..n * c {
                    let add = g_z.data()[nc] * inv;
                    for v in &mut grad_x.data_mut()[nc * plane..(nc + 1) * plane] {
                        *v += add;
                    }
                }
            }
            _ => {
                for chunk in &state.tape {
                    let bank = self.chunk_bank(c, chunk.c0)?;
                    let weights = self.combine_weights();
                    let cc = chunk.c1 - chunk.c0;
                    // Gradient of this chunk's descriptors, N x cc x 1 x 1.
                    let mut g_cur = Tensor::zeros(&[n, cc, 1, 1]);
                    for ni in 0..n {
                        for ci in 0..cc {
                            g_cur.data_mut()[ni * cc + ci] =
                                g_z.data()[ni * c + chunk.c0 + ci];
                        }
                    }
                    for rec in chunk.levels.iter().rev() {
                        if let (Some(s), Some(gc)) = (&rec.subbands, g_combine.as_mut()) {
                            for (k, band) in s.as_array().iter().enumerate() {
                                gc.data_mut()[k] += band.dot(&g_cur)?;
                            }
                        }
                        let blended = bank.blended_filter(&weights);
                        let stack = repeated_stack(&blended, cc);
                        let padded_dims = [n, cc, rec.pad_h, rec.pad_w];
                        let g_pad = tensor::conv2d_backward_input(
                            &g_cur,
                            &stack,
                            2,
                            cc,
                            &padded_dims,
                        )?;
                        g_cur =
                            pad_nchw_preserving_gap_backward(&g_pad, rec.in_h, rec.in_w)?;
                    }
                    // Route into the chunk's channels of grad_x.
                    for ni in 0..n {
                        for ci in 0..cc {
                            let src = ((ni * cc) + ci) * plane;
                            let dst = (ni * c + chunk.c0 + ci) * plane;
                            for j in 0..plane {
                                grad_x.data_mut()[dst + j] += g_cur.data()[src + j];
                            }
                        }
                    }
                }
            }
        }

        Ok((
            grad_x,
            AttentionGrads {
                w1: g_w1,
                w2: g_w2,
                combine: g_combine,
            },
        ))
    }

    fn chunk_bank(&self, channels: usize, c0: usize) -> Result<&WaveletBank> {
        match self.mode {
            SqueezeMode::Haar | SqueezeMode::Wavenet => {
                Ok(self.haar.as_ref().expect("haar bank present"))
            }
            SqueezeMode::WavenetC => {
                let assignment = self.assignment.as_ref().expect("assignment present");
                let banks = assignment.chunk_banks(channels)?;
                let chunk = channels / banks.len();
                Ok(banks[c0 / chunk])
            }
            SqueezeMode::Gap => Err(Error::InvalidArgument(
                "gap squeeze has no wavelet bank".into(),
            )),
        }
    }
}

fn tape_for(c0: usize, c1: usize, levels: Vec<LevelRec>) -> ChunkTape {
    ChunkTape { c0, c1, levels }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn repeated_stack(filter: &Tensor, channels: usize) -> Tensor {
    let d = filter.dims()[0];
    let mut out = Tensor::zeros(&[channels, 1, d, d]);
    let plane = d * d;
    for ci in 0..channels {
        out.data_mut()[ci * plane..(ci + 1) * plane].copy_from_slice(filter.data());
    }
    out
}

/// Run one chunk's recursion down to 1 x 1 descriptors.
///
/// Returns the final N x C x 1 x 1 tensor plus the per-level tape. With
/// `combine` absent only the approximation filter is applied; with weights
/// present all four subbands are formed and combined per level.
fn compress_chunk(
    x: &Tensor,
    bank: &WaveletBank,
    combine: Option<&[f64; 4]>,
    save_subbands: bool,
) -> Result<(Tensor, Vec<LevelRec>)> {
    let channels = x.dims()[1];
    let mut cur = x.clone();
    let mut levels = Vec::new();
    while cur.dims()[2] > 1 || cur.dims()[3] > 1 {
        let (h, w) = (cur.dims()[2], cur.dims()[3]);
        let (th, tw) = (padded_extent(h, bank.d()), padded_extent(w, bank.d()));
        let padded = pad_nchw_preserving_gap(&cur, th, tw)?;
        let mut rec = LevelRec {
            in_h: h,
            in_w: w,
            pad_h: th,
            pad_w: tw,
            subbands: None,
        };
        cur = match combine {
            Some(weights) => {
                let s = dwt2d_conv(&padded, bank)?;
                let mut acc = s.a.scale(weights[0]);
                acc.axpy(weights[1], &s.v)?;
                acc.axpy(weights[2], &s.h)?;
                acc.axpy(weights[3], &s.d)?;
                if save_subbands {
                    rec.subbands = Some(s);
                }
                acc
            }
            None => {
                let stack = repeated_stack(bank.approximation(), channels);
                tensor::conv2d(&padded, &stack, 2, channels)?
            }
        };
        levels.push(rec);
    }
    Ok((cur, levels))
}

/// Grouped orthogonal compression of an N x C x H x W tensor to N x C
/// descriptors: group-sized layers use their single assigned bank, wide
/// layers are split into chunks with one bank each and concatenated back.
pub fn compress_bottleneck(x: &Tensor, assignment: &FilterAssignment) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "compress_bottleneck expects N x C x H x W input, got {:?}",
            x.dims()
        )));
    }
    let (n, c) = (x.dims()[0], x.dims()[1]);
    let banks = assignment.chunk_banks(c)?;
    let chunk = c / banks.len();
    let mut z = Tensor::zeros(&[n, c]);
    for (i, bank) in banks.iter().enumerate() {
        let part = x.slice_axis(1, i * chunk, (i + 1) * chunk)?;
        let (out, _) = compress_chunk(&part, bank, None, false)?;
        for ni in 0..n {
            for ci in 0..chunk {
                z.data_mut()[ni * c + i * chunk + ci] = out.data()[ni * chunk + ci];
            }
        }
    }
    Ok(z)
}
