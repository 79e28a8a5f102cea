//! Dense row-major f64 tensors and the handful of kernels everything else
//! is built from: matrix multiplication, strided grouped 2D convolution
//! (cross-correlation, no padding) with its two backward passes,
//! elementwise arithmetic, reductions, and shape surgery.
//!
//! All numerics are 64-bit floats. The layout is row-major and fixed, so
//! serialized tensors are portable byte-for-byte.

use crate::error::{Error, Result};
use crate::rng::Rng;
use rayon::prelude::*;

/// Dense N-dimensional array of f64, row-major.
///
/// Invariants: `dims` is non-empty, every entry is >= 1, and
/// `data.len() == dims.iter().product()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        validate_dims(dims)?;
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?} (product {})",
                data.len(),
                dims,
                expect
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        validate_dims(dims).expect("invalid dims");
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let mut t = Tensor::zeros(dims);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    /// 2-D convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("from_rows: no rows".into()));
        }
        let w = rows[0].len();
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::Shape("from_rows: ragged rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Tensor::new(&[rows.len(), w], data)
    }

    /// Uniform samples in [0, 1).
    pub fn rand_uniform(rng: &mut Rng, dims: &[usize]) -> Self {
        Self::rand_range(rng, dims, 0.0, 1.0)
    }

    /// Uniform samples in [lo, hi).
    pub fn rand_range(rng: &mut Rng, dims: &[usize], lo: f64, hi: f64) -> Self {
        let mut t = Tensor::zeros(dims);
        t.data.iter_mut().for_each(|v| *v = rng.uniform(lo, hi));
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dims >= 1 everywhere, so tensors always hold data
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Shape(format!(
                "item() on tensor of dims {:?}",
                self.dims
            )));
        }
        Ok(self.data[0])
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.dims).enumerate() {
            debug_assert!(ix < d, "index {ix} out of bounds for axis {i} (dim {d})");
            off = off * d + ix;
        }
        off
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        validate_dims(dims)?;
        let expect: usize = dims.iter().product();
        if expect != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} (len {}) to {:?} (len {})",
                self.dims,
                self.data.len(),
                dims,
                expect
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let [r, c] = self.dims2()?;
        let mut out = Tensor::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(out)
    }

    fn dims2(&self) -> Result<[usize; 2]> {
        if self.dims.len() != 2 {
            return Err(Error::Shape(format!(
                "expected 2-D tensor, got dims {:?}",
                self.dims
            )));
        }
        Ok([self.dims[0], self.dims[1]])
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "dot: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Mean over one axis; the axis is removed. Reducing the last remaining
    /// axis yields a 1-element tensor of dims [1].
    pub fn reduce_mean(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "reduce_mean axis {} out of range for dims {:?}",
                axis, self.dims
            )));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let mid = self.dims[axis];
        let inner: usize = self.dims[axis + 1..].iter().product();
        let mut out_dims: Vec<usize> = self
            .dims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, &d)| d)
            .collect();
        if out_dims.is_empty() {
            out_dims.push(1);
        }
        let mut out = Tensor::zeros(&out_dims);
        let scale = 1.0 / mid as f64;
        for o in 0..outer {
            for m in 0..mid {
                let src = (o * mid + m) * inner;
                let dst = o * inner;
                for i in 0..inner {
                    out.data[dst + i] += self.data[src + i] * scale;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "{}: dims {:?} vs {:?}",
                op, self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            dims: self.dims.clone(),
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// self += alpha * other, in place.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "axpy: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Copy of [start, end) along `axis`.
    pub fn slice_axis(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        if axis >= self.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "slice axis {} out of range for dims {:?}",
                axis, self.dims
            )));
        }
        if start >= end || end > self.dims[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice range {}..{} invalid for axis {} of size {}",
                start, end, axis, self.dims[axis]
            )));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let mid = self.dims[axis];
        let inner: usize = self.dims[axis + 1..].iter().product();
        let mut out_dims = self.dims.clone();
        out_dims[axis] = end - start;
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = (o * mid + start) * inner;
            data.extend_from_slice(&self.data[base..base + (end - start) * inner]);
        }
        Tensor::new(&out_dims, data)
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let first = parts[0];
        if axis >= first.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "concat axis {} out of range for dims {:?}",
                axis, first.dims
            )));
        }
        for p in parts.iter().skip(1) {
            if p.dims.len() != first.dims.len()
                || p.dims
                    .iter()
                    .zip(&first.dims)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::Shape(format!(
                    "concat: dims {:?} vs {:?} differ off axis {}",
                    p.dims, first.dims, axis
                )));
            }
        }
        let outer: usize = first.dims[..axis].iter().product();
        let inner: usize = first.dims[axis + 1..].iter().product();
        let total_mid: usize = parts.iter().map(|p| p.dims[axis]).sum();
        let mut out_dims = first.dims.clone();
        out_dims[axis] = total_mid;
        let mut data = Vec::with_capacity(outer * total_mid * inner);
        for o in 0..outer {
            for p in parts {
                let mid = p.dims[axis];
                let base = o * mid * inner;
                data.extend_from_slice(&p.data[base..base + mid * inner]);
            }
        }
        Tensor::new(&out_dims, data)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Shape("dims must be non-empty".into()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("every dim must be >= 1, got {dims:?}")));
    }
    Ok(())
}

/// Largest elementwise absolute difference; shapes must agree.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims(), "max_abs_diff on mismatched shapes");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Matrix product of a (m x k) and b (k x n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, ka] = a.dims2()?;
    let [kb, n] = b.dims2()?;
    if ka != kb {
        return Err(Error::Shape(format!(
            "matmul: inner dims disagree, {:?} x {:?}",
            a.dims, b.dims
        )));
    }
    let mut out = Tensor::zeros(&[m, n]);
    let run_row = |i: usize, out_row: &mut [f64]| {
        let a_row = &a.data[i * ka..(i + 1) * ka];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if m * ka * n >= PAR_THRESHOLD {
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| run_row(i, row));
    } else {
        for (i, row) in out.data.chunks_mut(n).enumerate() {
            run_row(i, row);
        }
    }
    Ok(out)
}

/// Work threshold (multiply-adds) below which kernels stay single-threaded.
const PAR_THRESHOLD: usize = 1 << 15;

struct ConvGeometry {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    f_out: usize,
    c_per_g: usize,
    f_per_g: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(
    x_dims: &[usize],
    f_dims: &[usize],
    stride: usize,
    groups: usize,
) -> Result<ConvGeometry> {
    if x_dims.len() != 4 || f_dims.len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects 4-D input and filters, got {x_dims:?} and {f_dims:?}"
        )));
    }
    let (batch, c_in, h, w) = (x_dims[0], x_dims[1], x_dims[2], x_dims[3]);
    let (f_out, fc, kh, kw) = (f_dims[0], f_dims[1], f_dims[2], f_dims[3]);
    if stride < 1 {
        return Err(Error::InvalidArgument("conv2d: stride must be >= 1".into()));
    }
    if groups == 0 || c_in % groups != 0 || f_out % groups != 0 {
        return Err(Error::Shape(format!(
            "conv2d: groups {groups} must divide input channels {c_in} and filter count {f_out}"
        )));
    }
    let c_per_g = c_in / groups;
    if fc != c_per_g {
        return Err(Error::Shape(format!(
            "conv2d: filters {:?} expect {} input channels per group, input has {}",
            f_dims, fc, c_per_g
        )));
    }
    if kh > h || kw > w {
        return Err(Error::Shape(format!(
            "conv2d: kernel {kh}x{kw} larger than input {h}x{w} (no padding)"
        )));
    }
    Ok(ConvGeometry {
        batch,
        c_in,
        h,
        w,
        f_out,
        c_per_g,
        f_per_g: f_out / groups,
        kh,
        kw,
        oh: (h - kh) / stride + 1,
        ow: (w - kw) / stride + 1,
    })
}

/// Strided grouped 2D cross-correlation, no padding, no kernel flip:
/// out[n,f,k,l] = sum_{c,p,q} filters[f,c,p,q] * x[n, c, k*stride+p, l*stride+q].
pub fn conv2d(x: &Tensor, filters: &Tensor, stride: usize, groups: usize) -> Result<Tensor> {
    let g = conv_geometry(x.dims(), filters.dims(), stride, groups)?;
    let mut out = Tensor::zeros(&[g.batch, g.f_out, g.oh, g.ow]);
    let xs = x.data();
    let fs = filters.data();
    let plane = g.oh * g.ow;

    let run = |nf: usize, slab: &mut [f64]| {
        let n = nf / g.f_out;
        let f = nf % g.f_out;
        let gi = f / g.f_per_g;
        for cg in 0..g.c_per_g {
            let c = gi * g.c_per_g + cg;
            let x_base = (n * g.c_in + c) * g.h * g.w;
            let f_base = (f * g.c_per_g + cg) * g.kh * g.kw;
            for p in 0..g.kh {
                for q in 0..g.kw {
                    let wgt = fs[f_base + p * g.kw + q];
                    if wgt == 0.0 {
                        continue;
                    }
                    for k in 0..g.oh {
                        let in_row = x_base + (k * stride + p) * g.w + q;
                        let out_row = &mut slab[k * g.ow..(k + 1) * g.ow];
                        if stride == 1 {
                            let src = &xs[in_row..in_row + g.ow];
                            for (o, &v) in out_row.iter_mut().zip(src) {
                                *o += wgt * v;
                            }
                        } else {
                            for (l, o) in out_row.iter_mut().enumerate() {
                                *o += wgt * xs[in_row + l * stride];
                            }
                        }
                    }
                }
            }
        }
    };

    let work = g.batch * g.f_out * plane * g.c_per_g * g.kh * g.kw;
    if work >= PAR_THRESHOLD {
        out.data
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(nf, slab)| run(nf, slab));
    } else {
        for (nf, slab) in out.data.chunks_mut(plane).enumerate() {
            run(nf, slab);
        }
    }
    Ok(out)
}

/// Gradient of conv2d with respect to its input (scatter of grad_out through
/// the filters). `in_dims` is the shape of the original input.
pub fn conv2d_backward_input(
    grad_out: &Tensor,
    filters: &Tensor,
    stride: usize,
    groups: usize,
    in_dims: &[usize],
) -> Result<Tensor> {
    let g = conv_geometry(in_dims, filters.dims(), stride, groups)?;
    let expect = [g.batch, g.f_out, g.oh, g.ow];
    if grad_out.dims() != expect {
        return Err(Error::Shape(format!(
            "conv2d_backward_input: grad dims {:?}, expected {:?}",
            grad_out.dims(),
            expect
        )));
    }
    let mut grad_in = Tensor::zeros(in_dims);
    let gs = grad_out.data();
    let fs = filters.data();
    let plane = g.h * g.w;

    let run = |nc: usize, slab: &mut [f64]| {
        let n = nc / g.c_in;
        let c = nc % g.c_in;
        let gi = c / g.c_per_g;
        let cg = c % g.c_per_g;
        for fg in 0..g.f_per_g {
            let f = gi * g.f_per_g + fg;
            let g_base = (n * g.f_out + f) * g.oh * g.ow;
            let f_base = (f * g.c_per_g + cg) * g.kh * g.kw;
            for p in 0..g.kh {
                for q in 0..g.kw {
                    let wgt = fs[f_base + p * g.kw + q];
                    if wgt == 0.0 {
                        continue;
                    }
                    for k in 0..g.oh {
                        let dst_row = (k * stride + p) * g.w + q;
                        let src = &gs[g_base + k * g.ow..g_base + (k + 1) * g.ow];
                        if stride == 1 {
                            let dst = &mut slab[dst_row..dst_row + g.ow];
                            for (d, &v) in dst.iter_mut().zip(src) {
                                *d += wgt * v;
                            }
                        } else {
                            for (l, &v) in src.iter().enumerate() {
                                slab[dst_row + l * stride] += wgt * v;
                            }
                        }
                    }
                }
            }
        }
    };

    let work = g.batch * g.c_in * g.oh * g.ow * g.f_per_g * g.kh * g.kw;
    if work >= PAR_THRESHOLD {
        grad_in
            .data
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(nc, slab)| run(nc, slab));
    } else {
        for (nc, slab) in grad_in.data.chunks_mut(plane).enumerate() {
            run(nc, slab);
        }
    }
    Ok(grad_in)
}

/// Gradient of conv2d with respect to the filters.
pub fn conv2d_backward_filters(
    x: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    groups: usize,
    filter_dims: &[usize],
) -> Result<Tensor> {
    let g = conv_geometry(x.dims(), filter_dims, stride, groups)?;
    let expect = [g.batch, g.f_out, g.oh, g.ow];
    if grad_out.dims() != expect {
        return Err(Error::Shape(format!(
            "conv2d_backward_filters: grad dims {:?}, expected {:?}",
            grad_out.dims(),
            expect
        )));
    }
    let mut grad_f = Tensor::zeros(filter_dims);
    let xs = x.data();
    let gs = grad_out.data();
    let per_f = g.c_per_g * g.kh * g.kw;

    let run = |f: usize, slab: &mut [f64]| {
        let gi = f / g.f_per_g;
        for cg in 0..g.c_per_g {
            let c = gi * g.c_per_g + cg;
            for p in 0..g.kh {
                for q in 0..g.kw {
                    let mut acc = 0.0;
                    for n in 0..g.batch {
                        let g_base = (n * g.f_out + f) * g.oh * g.ow;
                        let x_base = (n * g.c_in + c) * g.h * g.w;
                        for k in 0..g.oh {
                            let grow = &gs[g_base + k * g.ow..g_base + (k + 1) * g.ow];
                            let x_row = x_base + (k * stride + p) * g.w + q;
                            if stride == 1 {
                                let xrow = &xs[x_row..x_row + g.ow];
                                acc += grow
                                    .iter()
                                    .zip(xrow)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            } else {
                                for (l, &gv) in grow.iter().enumerate() {
                                    acc += gv * xs[x_row + l * stride];
                                }
                            }
                        }
                    }
                    slab[(cg * g.kh + p) * g.kw + q] = acc;
                }
            }
        }
    };

    let work = g.f_out * per_f * g.batch * g.oh * g.ow;
    if work >= PAR_THRESHOLD {
        grad_f
            .data
            .par_chunks_mut(per_f)
            .enumerate()
            .for_each(|(f, slab)| run(f, slab));
    } else {
        for (f, slab) in grad_f.data.chunks_mut(per_f).enumerate() {
            run(f, slab);
        }
    }
    Ok(grad_f)
}

/// Zero-pad the two spatial dims of an NCHW tensor by `pad` on every side.
pub fn zero_pad_nchw(x: &Tensor, pad: usize) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "zero_pad_nchw expects 4-D input, got {:?}",
            x.dims()
        )));
    }
    if pad == 0 {
        return Ok(x.clone());
    }
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Tensor::zeros(&[n, c, hp, wp]);
    for nc in 0..n * c {
        let src = nc * h * w;
        let dst = nc * hp * wp;
        for row in 0..h {
            let s = src + row * w;
            let d = dst + (row + pad) * wp + pad;
            out.data[d..d + w].copy_from_slice(&x.data[s..s + w]);
        }
    }
    Ok(out)
}

/// Inverse of `zero_pad_nchw`: crop `pad` cells off every spatial side.
pub fn crop_nchw(x: &Tensor, pad: usize) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "crop_nchw expects 4-D input, got {:?}",
            x.dims()
        )));
    }
    if pad == 0 {
        return Ok(x.clone());
    }
    let (n, c, hp, wp) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    if hp <= 2 * pad || wp <= 2 * pad {
        return Err(Error::Shape(format!(
            "crop_nchw: pad {pad} too large for {hp}x{wp}"
        )));
    }
    let (h, w) = (hp - 2 * pad, wp - 2 * pad);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    for nc in 0..n * c {
        let src = nc * hp * wp;
        let dst = nc * h * w;
        for row in 0..h {
            let s = src + (row + pad) * wp + pad;
            let d = dst + row * w;
            out.data[d..d + w].copy_from_slice(&x.data[s..s + w]);
        }
    }
    Ok(out)
}
