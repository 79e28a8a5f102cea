//! 1D/2D discrete wavelet transforms in two equivalent forms (banded-matrix
//! multiplication and strided grouped convolution), the inverse transform,
//! GAP-preserving padding, and the recursive approximation that reduces an
//! image to a single coefficient.
//!
//! A `WaveletBank` holds four d x d analysis filters: approximation plus
//! vertical, horizontal, and diagonal details. In `Orthonormal` mode the
//! flattened filters are pairwise orthogonal with unit norm; in `Averaging`
//! mode the approximation filter is the plain block mean (1/4 entries for
//! d = 2), which makes the recursive approximation equal global average
//! pooling exactly rather than up to a power-of-two factor.

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Normalization convention of a filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Unit-norm filters; each recursion level scales means by 2.
    Orthonormal,
    /// Block-mean approximation filter; recursion preserves the mean.
    Averaging,
}

/// Four 2D analysis filters plus normalization mode.
///
/// Banks built from 1D taps (`from_taps`) remember them, which enables the
/// banded-matrix transform path; banks assembled from arbitrary 2D filters
/// (Gram-Schmidt output) go through the convolution path only.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBank {
    d: usize,
    f_a: Tensor,
    f_v: Tensor,
    f_h: Tensor,
    f_d: Tensor,
    norm: NormMode,
    taps: Option<(Vec<f64>, Vec<f64>)>,
}

impl WaveletBank {
    /// Build a separable bank from 1D scale taps `h` and shift taps `g`:
    /// f_a = h (x) h, f_v = h (x) g, f_h = g (x) h, f_d = g (x) g.
    pub fn from_taps(h: &[f64], g: &[f64], norm: NormMode) -> Result<Self> {
        if h.len() != g.len() || h.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "taps must have equal length >= 2, got {} and {}",
                h.len(),
                g.len()
            )));
        }
        let d = h.len();
        let outer = |row: &[f64], col: &[f64]| {
            let mut t = Tensor::zeros(&[d, d]);
            for p in 0..d {
                for q in 0..d {
                    t.data_mut()[p * d + q] = row[p] * col[q];
                }
            }
            t
        };
        Ok(WaveletBank {
            d,
            f_a: outer(h, h),
            f_v: outer(h, g),
            f_h: outer(g, h),
            f_d: outer(g, g),
            norm,
            taps: Some((h.to_vec(), g.to_vec())),
        })
    }

    /// Assemble a bank from four explicit d x d filters (a, v, h, d order).
    pub fn from_filters(filters: [Tensor; 4], norm: NormMode) -> Result<Self> {
        let d = filters[0].dims()[0];
        for f in &filters {
            if f.dims() != [d, d] {
                return Err(Error::Shape(format!(
                    "bank filters must all be {d}x{d}, got {:?}",
                    f.dims()
                )));
            }
        }
        let [f_a, f_v, f_h, f_d] = filters;
        Ok(WaveletBank {
            d,
            f_a,
            f_v,
            f_h,
            f_d,
            norm,
            taps: None,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn norm(&self) -> NormMode {
        self.norm
    }

    /// Filters in (a, v, h, d) order.
    pub fn filters(&self) -> [&Tensor; 4] {
        [&self.f_a, &self.f_v, &self.f_h, &self.f_d]
    }

    pub fn approximation(&self) -> &Tensor {
        &self.f_a
    }

    pub fn taps(&self) -> Option<(&[f64], &[f64])> {
        self.taps.as_ref().map(|(h, g)| (h.as_slice(), g.as_slice()))
    }

    /// 4x4 Gram matrix of the flattened filters.
    pub fn gram(&self) -> Tensor {
        let fs = self.filters();
        let mut g = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            for j in 0..4 {
                g.data_mut()[i * 4 + j] = fs[i].dot(fs[j]).expect("same dims");
            }
        }
        g
    }

    /// Gram matrix within `tol` of the identity.
    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let g = self.gram();
        (0..4).all(|i| {
            (0..4).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                (g.data()[i * 4 + j] - want).abs() <= tol
            })
        })
    }

    /// Per-channel filter stack for grouped convolution: (4C, 1, d, d),
    /// channel c owning filters 4c..4c+4 in (a, v, h, d) order.
    pub fn filter_stack(&self, channels: usize) -> Tensor {
        let d = self.d;
        let mut out = Tensor::zeros(&[4 * channels, 1, d, d]);
        let plane = d * d;
        for c in 0..channels {
            for (k, f) in self.filters().iter().enumerate() {
                let dst = (c * 4 + k) * plane;
                out.data_mut()[dst..dst + plane].copy_from_slice(f.data());
            }
        }
        out
    }

    /// Weighted sum of the four filters.
    pub fn blended_filter(&self, weights: &[f64; 4]) -> Tensor {
        let mut out = Tensor::zeros(&[self.d, self.d]);
        for (w, f) in weights.iter().zip(self.filters()) {
            out.axpy(*w, f).expect("same dims");
        }
        out
    }
}

/// The four equally-shaped DWT outputs: approximation plus vertical,
/// horizontal, and diagonal differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    pub a: Tensor,
    pub v: Tensor,
    pub h: Tensor,
    pub d: Tensor,
}

impl Subbands {
    pub fn new(a: Tensor, v: Tensor, h: Tensor, d: Tensor) -> Result<Self> {
        if v.dims() != a.dims() || h.dims() != a.dims() || d.dims() != a.dims() {
            return Err(Error::Shape(format!(
                "subband shapes differ: a {:?}, v {:?}, h {:?}, d {:?}",
                a.dims(),
                v.dims(),
                h.dims(),
                d.dims()
            )));
        }
        Ok(Subbands { a, v, h, d })
    }

    pub fn as_array(&self) -> [&Tensor; 4] {
        [&self.a, &self.v, &self.h, &self.d]
    }

    /// Sum of squares per subband in (a, v, h, d) order.
    pub fn energies(&self) -> [f64; 4] {
        [
            self.a.norm_sq(),
            self.v.norm_sq(),
            self.h.norm_sq(),
            self.d.norm_sq(),
        ]
    }

    pub fn total_energy(&self) -> f64 {
        self.energies().iter().sum()
    }
}

/// Banded analysis matrix for a separable 2-tap bank: rows 0..n/2 carry the
/// scale taps shifted by 2, rows n/2..n the shift taps.
pub fn build_wavelet_matrix(bank: &WaveletBank, n: usize) -> Result<Tensor> {
    let (h, g) = bank.taps().ok_or_else(|| {
        Error::InvalidArgument(
            "matrix path requires a separable bank built from 1D taps".into(),
        )
    })?;
    if bank.d() != 2 {
        return Err(Error::InvalidArgument(format!(
            "matrix path is defined for 2-tap banks, this bank has d = {}",
            bank.d()
        )));
    }
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "wavelet matrix size must be even and >= 2, got {n}"
        )));
    }
    let half = n / 2;
    let mut w = Tensor::zeros(&[n, n]);
    for r in 0..half {
        w.data_mut()[r * n + 2 * r] = h[0];
        w.data_mut()[r * n + 2 * r + 1] = h[1];
        w.data_mut()[(half + r) * n + 2 * r] = g[0];
        w.data_mut()[(half + r) * n + 2 * r + 1] = g[1];
    }
    Ok(w)
}

/// Single-level 2D DWT of an H x W image by W_r * X * W_c^T; the four
/// quadrants of the product are the subbands.
pub fn dwt2d_matmul(x: &Tensor, bank: &WaveletBank) -> Result<Subbands> {
    if x.ndim() != 2 {
        return Err(Error::Shape(format!(
            "dwt2d_matmul expects a 2-D image, got {:?}",
            x.dims()
        )));
    }
    let (h, w) = (x.dims()[0], x.dims()[1]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "dwt2d_matmul needs even dims, got {h}x{w}; pad first (pad_preserving_gap)"
        )));
    }
    let wr = build_wavelet_matrix(bank, h)?;
    let wc = build_wavelet_matrix(bank, w)?;
    let y = tensor::matmul(&tensor::matmul(&wr, x)?, &wc.transpose()?)?;
    let (hh, hw) = (h / 2, w / 2);
    Ok(Subbands {
        a: slice2d(&y, 0, hh, 0, hw),
        v: slice2d(&y, 0, hh, hw, w),
        h: slice2d(&y, hh, h, 0, hw),
        d: slice2d(&y, hh, h, hw, w),
    })
}

fn slice2d(x: &Tensor, r0: usize, r1: usize, c0: usize, c1: usize) -> Tensor {
    let w = x.dims()[1];
    let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0));
    for r in r0..r1 {
        data.extend_from_slice(&x.data()[r * w + c0..r * w + c1]);
    }
    Tensor::new(&[r1 - r0, c1 - c0], data).expect("valid slice")
}

/// Single-level 2D DWT of an N x C x H x W batch by grouped convolution:
/// one 4-filter stack per channel, stride 2, no padding. Each subband comes
/// back as N x C x H' x W'.
pub fn dwt2d_conv(x: &Tensor, bank: &WaveletBank) -> Result<Subbands> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "dwt2d_conv expects N x C x H x W input, got {:?}",
            x.dims()
        )));
    }
    let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    if h < bank.d() || w < bank.d() {
        return Err(Error::Shape(format!(
            "dwt2d_conv: input {h}x{w} smaller than {}x{} filters",
            bank.d(),
            bank.d()
        )));
    }
    let stack = bank.filter_stack(c);
    let out = tensor::conv2d(x, &stack, 2, c)?;
    let (oh, ow) = (out.dims()[2], out.dims()[3]);
    // out channel 4c+k holds subband k of channel c.
    let plane = oh * ow;
    let mut bands: Vec<Tensor> = (0..4).map(|_| Tensor::zeros(&[n, c, oh, ow])).collect();
    for ni in 0..n {
        for ci in 0..c {
            for (k, band) in bands.iter_mut().enumerate() {
                let src = ((ni * 4 * c) + ci * 4 + k) * plane;
                let dst = (ni * c + ci) * plane;
                band.data_mut()[dst..dst + plane]
                    .copy_from_slice(&out.data()[src..src + plane]);
            }
        }
    }
    let mut it = bands.into_iter();
    Subbands::new(
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    )
}

/// Inverse of the single-level transform for orthonormal 2-tap banks, where
/// the four flattened filters form an orthonormal basis of R^4 and stride-2
/// windows tile the image: each 2x2 block is sum_k s_k[i,j] * f_k.
///
/// Larger d is rejected: with stride 2 the windows overlap and four filters
/// no longer determine the input. Averaging banks are rejected because the
/// /4 normalization is not an isometry.
pub fn idwt2d(s: &Subbands, bank: &WaveletBank) -> Result<Tensor> {
    if bank.norm() == NormMode::Averaging {
        return Err(Error::InvalidArgument(
            "idwt2d: averaging-mode banks are not invertible as normalized".into(),
        ));
    }
    if bank.d() != 2 {
        return Err(Error::InvalidArgument(format!(
            "idwt2d supports d = 2 banks only (got d = {})",
            bank.d()
        )));
    }
    let dims = s.a.dims().to_vec();
    match dims.len() {
        2 => {
            let mut out = Tensor::zeros(&[dims[0] * 2, dims[1] * 2]);
            invert_plane(s, bank, 0, dims[0], dims[1], &mut out, 0);
            Ok(out)
        }
        4 => {
            let (n, c, oh, ow) = (dims[0], dims[1], dims[2], dims[3]);
            let mut out = Tensor::zeros(&[n, c, oh * 2, ow * 2]);
            for nc in 0..n * c {
                invert_plane(s, bank, nc * oh * ow, oh, ow, &mut out, nc * oh * ow * 4);
            }
            Ok(out)
        }
        _ => Err(Error::Shape(format!(
            "idwt2d expects 2-D or 4-D subbands, got {dims:?}"
        ))),
    }
}

fn invert_plane(
    s: &Subbands,
    bank: &WaveletBank,
    src_base: usize,
    oh: usize,
    ow: usize,
    out: &mut Tensor,
    dst_base: usize,
) {
    let w = ow * 2;
    let filters = bank.filters();
    for i in 0..oh {
        for j in 0..ow {
            for (band, f) in s.as_array().iter().zip(filters.iter()) {
                let coef = band.data()[src_base + i * ow + j];
                if coef == 0.0 {
                    continue;
                }
                for p in 0..2 {
                    for q in 0..2 {
                        out.data_mut()[dst_base + (2 * i + p) * w + 2 * j + q] +=
                            coef * f.data()[p * 2 + q];
                    }
                }
            }
        }
    }
}

/// Extend an image to the next even extents, filling new cells with the
/// image mean so the global average is unchanged. Identity on even inputs.
pub fn pad_preserving_gap(x: &Tensor) -> Tensor {
    assert_eq!(x.ndim(), 2, "pad_preserving_gap expects a 2-D image");
    let (h, w) = (x.dims()[0], x.dims()[1]);
    let (th, tw) = (next_even(h), next_even(w));
    if (th, tw) == (h, w) {
        return x.clone();
    }
    pad_to_mean(x, th, tw)
}

fn pad_to_mean(x: &Tensor, th: usize, tw: usize) -> Tensor {
    let (h, w) = (x.dims()[0], x.dims()[1]);
    let mean = x.mean();
    let mut out = Tensor::filled(&[th, tw], mean);
    for r in 0..h {
        out.data_mut()[r * tw..r * tw + w].copy_from_slice(&x.data()[r * w..(r + 1) * w]);
    }
    out
}

pub(crate) fn next_even(n: usize) -> usize {
    if n % 2 == 0 {
        n
    } else {
        n + 1
    }
}

/// Spatial extent each side must reach before a stride-2, no-padding pass
/// with a d x d filter: even, and at least d.
pub fn padded_extent(cur: usize, d: usize) -> usize {
    next_even(cur).max(next_even(d))
}

/// Mean-pad every (n, c) plane of an NCHW tensor to (th, tw), each plane
/// with its own mean. Used between recursion levels.
pub fn pad_nchw_preserving_gap(x: &Tensor, th: usize, tw: usize) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::Shape(format!(
            "pad_nchw_preserving_gap expects 4-D input, got {:?}",
            x.dims()
        )));
    }
    let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    if th < h || tw < w {
        return Err(Error::InvalidArgument(format!(
            "pad target {th}x{tw} smaller than input {h}x{w}"
        )));
    }
    if (th, tw) == (h, w) {
        return Ok(x.clone());
    }
    let mut out = Tensor::zeros(&[n, c, th, tw]);
    for nc in 0..n * c {
        let src = nc * h * w;
        let plane = &x.data()[src..src + h * w];
        let mean = plane.iter().sum::<f64>() / (h * w) as f64;
        let dst = nc * th * tw;
        let out_plane = &mut out.data_mut()[dst..dst + th * tw];
        out_plane.iter_mut().for_each(|v| *v = mean);
        for r in 0..h {
            out_plane[r * tw..r * tw + w].copy_from_slice(&plane[r * w..(r + 1) * w]);
        }
    }
    Ok(out)
}

/// Adjoint of `pad_nchw_preserving_gap`: the original cells receive their
/// own gradient plus an equal share of the gradient that fell on the
/// mean-filled cells (the mean is linear in every original cell).
pub fn pad_nchw_preserving_gap_backward(
    grad: &Tensor,
    orig_h: usize,
    orig_w: usize,
) -> Result<Tensor> {
    if grad.ndim() != 4 {
        return Err(Error::Shape(format!(
            "pad backward expects 4-D gradient, got {:?}",
            grad.dims()
        )));
    }
    let (n, c, th, tw) = (grad.dims()[0], grad.dims()[1], grad.dims()[2], grad.dims()[3]);
    if (th, tw) == (orig_h, orig_w) {
        return Ok(grad.clone());
    }
    let mut out = Tensor::zeros(&[n, c, orig_h, orig_w]);
    for nc in 0..n * c {
        let src = nc * th * tw;
        let g_plane = &grad.data()[src..src + th * tw];
        let mut pad_sum = 0.0;
        for r in 0..th {
            for col in 0..tw {
                if r >= orig_h || col >= orig_w {
                    pad_sum += g_plane[r * tw + col];
                }
            }
        }
        let share = pad_sum / (orig_h * orig_w) as f64;
        let dst = nc * orig_h * orig_w;
        let o_plane = &mut out.data_mut()[dst..dst + orig_h * orig_w];
        for r in 0..orig_h {
            for col in 0..orig_w {
                o_plane[r * orig_w + col] = g_plane[r * tw + col] + share;
            }
        }
    }
    Ok(out)
}

/// Recursive approximation with the Haar filter down to a single
/// coefficient, mean-padding odd extents at every level.
///
/// Averaging mode returns exactly the global average of `x`; orthonormal
/// mode returns 2^J times it, J being the number of levels applied.
pub fn haar_recursive_approx(x: &Tensor, mode: NormMode) -> f64 {
    assert_eq!(x.ndim(), 2, "haar_recursive_approx expects a 2-D image");
    let divisor = match mode {
        NormMode::Averaging => 4.0,
        NormMode::Orthonormal => 2.0,
    };
    let mut cur = x.clone();
    loop {
        let (h, w) = (cur.dims()[0], cur.dims()[1]);
        if h == 1 && w == 1 {
            return cur.data()[0];
        }
        cur = pad_preserving_gap(&cur);
        let (h, w) = (cur.dims()[0], cur.dims()[1]);
        let (oh, ow) = (h / 2, w / 2);
        let mut next = Tensor::zeros(&[oh, ow]);
        for i in 0..oh {
            for j in 0..ow {
                let base = 2 * i * w + 2 * j;
                let sum = cur.data()[base]
                    + cur.data()[base + 1]
                    + cur.data()[base + w]
                    + cur.data()[base + w + 1];
                next.data_mut()[i * ow + j] = sum / divisor;
            }
        }
        cur = next;
    }
}

/// Multilevel DWT of a single image down to one coefficient.
///
/// Each level mean-pads to a valid extent, transforms, and feeds forward
/// either the approximation subband (weights absent) or the per-level
/// linear combination a_a*A + a_v*V + a_h*H + a_d*D. Exactly `levels`
/// levels are applied; if the result is still larger than 1x1 the level
/// count was too small for the input and an error is returned.
pub fn dwt_multilevel(
    x: &Tensor,
    bank: &WaveletBank,
    levels: usize,
    combine: Option<&[f64; 4]>,
) -> Result<f64> {
    if x.ndim() != 2 {
        return Err(Error::Shape(format!(
            "dwt_multilevel expects a 2-D image, got {:?}",
            x.dims()
        )));
    }
    if levels < 1 {
        return Err(Error::InvalidArgument("dwt_multilevel: levels must be >= 1".into()));
    }
    let (h, w) = (x.dims()[0], x.dims()[1]);
    let mut cur = x.reshape(&[1, 1, h, w])?;
    for _ in 0..levels {
        let (h, w) = (cur.dims()[2], cur.dims()[3]);
        let (th, tw) = (padded_extent(h, bank.d()), padded_extent(w, bank.d()));
        cur = pad_nchw_preserving_gap(&cur, th, tw)?;
        let s = dwt2d_conv(&cur, bank)?;
        cur = match combine {
            None => s.a,
            Some(alpha) => {
                let mut acc = s.a.scale(alpha[0]);
                acc.axpy(alpha[1], &s.v)?;
                acc.axpy(alpha[2], &s.h)?;
                acc.axpy(alpha[3], &s.d)?;
                acc
            }
        };
    }
    if cur.dims()[2] != 1 || cur.dims()[3] != 1 {
        return Err(Error::InvalidArgument(format!(
            "{levels} levels leave a {}x{} approximation for a {h}x{w} input; increase levels",
            cur.dims()[2],
            cur.dims()[3]
        )));
    }
    Ok(cur.data()[0])
}

/// Levels needed for the recursion above to reach a single coefficient.
pub fn levels_to_scalar(h: usize, w: usize, d: usize) -> usize {
    let mut levels = 0;
    let (mut h, mut w) = (h, w);
    while h > 1 || w > 1 {
        h = (padded_extent(h, d) - d) / 2 + 1;
        w = (padded_extent(w, d) - d) / 2 + 1;
        levels += 1;
    }
    levels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{haar_bank, random_orthogonal_bank};
    use crate::rng::Rng;
    use crate::tensor::max_abs_diff;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn haar_matrix_n2_is_the_2x2_butterfly() {
        let w = build_wavelet_matrix(&haar_bank(NormMode::Orthonormal), 2).unwrap();
        let want = [SQRT_HALF, SQRT_HALF, SQRT_HALF, -SQRT_HALF];
        for (got, want) in w.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn haar_matrix_n4_layout() {
        let w = build_wavelet_matrix(&haar_bank(NormMode::Orthonormal), 4).unwrap();
        let s = SQRT_HALF;
        #[rustfmt::skip]
        let want = [
            s,  s,  0., 0.,
            0., 0., s,  s,
            s, -s,  0., 0.,
            0., 0., s, -s,
        ];
        for (got, want) in w.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn haar_matrix_is_orthogonal_for_even_sizes() {
        let bank = haar_bank(NormMode::Orthonormal);
        for n in [2, 4, 8, 16, 30] {
            let w = build_wavelet_matrix(&bank, n).unwrap();
            let prod = tensor::matmul(&w, &w.transpose().unwrap()).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod.data()[i * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wavelet_matrix_rejects_odd_size() {
        assert!(build_wavelet_matrix(&haar_bank(NormMode::Orthonormal), 5).is_err());
    }

    #[test]
    fn dwt2d_matmul_hand_evaluated_2x2() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = dwt2d_matmul(&x, &haar_bank(NormMode::Orthonormal)).unwrap();
        assert!((s.a.data()[0] - 5.0).abs() < 1e-12);
        assert!((s.v.data()[0] + 1.0).abs() < 1e-12);
        assert!((s.h.data()[0] + 2.0).abs() < 1e-12);
        assert!(s.d.data()[0].abs() < 1e-12);
    }

    #[test]
    fn dwt2d_constant_image_kills_differences() {
        let c = 3.7;
        let x = Tensor::filled(&[4, 4], c);
        let s = dwt2d_matmul(&x, &haar_bank(NormMode::Orthonormal)).unwrap();
        for &v in s.a.data() {
            assert!((v - 2.0 * c).abs() < 1e-12);
        }
        for band in [&s.v, &s.h, &s.d] {
            for &v in band.data() {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dwt2d_matmul_rejects_odd_dims_and_mentions_padding() {
        let x = Tensor::zeros(&[3, 4]);
        let err = dwt2d_matmul(&x, &haar_bank(NormMode::Orthonormal))
            .unwrap_err()
            .to_string();
        assert!(err.contains("pad"), "{err}");
    }

    #[test]
    fn dwt2d_conv_hand_evaluated_2x2() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = dwt2d_conv(&x, &haar_bank(NormMode::Orthonormal)).unwrap();
        assert!((s.a.data()[0] - 5.0).abs() < 1e-12);
        assert!((s.v.data()[0] + 1.0).abs() < 1e-12);
        assert!((s.h.data()[0] + 2.0).abs() < 1e-12);
        assert!(s.d.data()[0].abs() < 1e-12);
    }

    #[test]
    fn dwt2d_conv_averaging_gives_block_mean() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = dwt2d_conv(&x, &haar_bank(NormMode::Averaging)).unwrap();
        assert!((s.a.data()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn conv_path_matches_matmul_path_per_sample_per_channel() {
        let mut rng = Rng::new(31);
        let x = Tensor::rand_range(&mut rng, &[2, 3, 16, 16], -1.0, 1.0);
        let bank = haar_bank(NormMode::Orthonormal);
        let conv = dwt2d_conv(&x, &bank).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                let plane = x
                    .slice_axis(0, n, n + 1)
                    .unwrap()
                    .slice_axis(1, c, c + 1)
                    .unwrap()
                    .reshape(&[16, 16])
                    .unwrap();
                let mat = dwt2d_matmul(&plane, &bank).unwrap();
                for (cb, mb) in conv.as_array().iter().zip(mat.as_array()) {
                    let conv_plane = cb
                        .slice_axis(0, n, n + 1)
                        .unwrap()
                        .slice_axis(1, c, c + 1)
                        .unwrap()
                        .reshape(&[8, 8])
                        .unwrap();
                    assert!(max_abs_diff(&conv_plane, mb) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn dwt2d_conv_rejects_input_smaller_than_filter() {
        let x = Tensor::zeros(&[1, 1, 1, 4]);
        assert!(dwt2d_conv(&x, &haar_bank(NormMode::Orthonormal)).is_err());
    }

    #[test]
    fn idwt_round_trip_random_8x8() {
        let mut rng = Rng::new(37);
        let x = Tensor::rand_range(&mut rng, &[8, 8], -1.0, 1.0);
        let bank = haar_bank(NormMode::Orthonormal);
        let back = idwt2d(&dwt2d_matmul(&x, &bank).unwrap(), &bank).unwrap();
        assert!(max_abs_diff(&back, &x) <= 1e-8);
    }

    #[test]
    fn idwt_round_trip_random_orthogonal_bank() {
        let mut rng = Rng::new(41);
        let bank = random_orthogonal_bank(&mut rng, 2).unwrap();
        let x = Tensor::rand_range(&mut rng, &[1, 2, 8, 8], -1.0, 1.0);
        let back = idwt2d(&dwt2d_conv(&x, &bank).unwrap(), &bank).unwrap();
        assert!(max_abs_diff(&back, &x) <= 1e-8);
    }

    #[test]
    fn idwt_of_zero_subbands_is_zero() {
        let z = Tensor::zeros(&[2, 2]);
        let s = Subbands::new(z.clone(), z.clone(), z.clone(), z).unwrap();
        let out = idwt2d(&s, &haar_bank(NormMode::Orthonormal)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idwt_approximation_only_gives_half_amplitude_constant() {
        let c = 4.0;
        let z = Tensor::zeros(&[2, 2]);
        let s = Subbands::new(Tensor::filled(&[2, 2], c), z.clone(), z.clone(), z).unwrap();
        let out = idwt2d(&s, &haar_bank(NormMode::Orthonormal)).unwrap();
        for &v in out.data() {
            assert!((v - c / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn idwt_rejects_averaging_banks() {
        let z = Tensor::zeros(&[2, 2]);
        let s = Subbands::new(z.clone(), z.clone(), z.clone(), z).unwrap();
        assert!(idwt2d(&s, &haar_bank(NormMode::Averaging)).is_err());
    }

    #[test]
    fn energy_is_preserved_by_orthonormal_transform() {
        let mut rng = Rng::new(43);
        let x = Tensor::rand_range(&mut rng, &[1, 1, 16, 16], -1.0, 1.0);
        let s = dwt2d_conv(&x, &haar_bank(NormMode::Orthonormal)).unwrap();
        let rel = (x.norm_sq() - s.total_energy()).abs() / x.norm_sq();
        assert!(rel <= 1e-8);
    }

    #[test]
    fn pad_constant_3x3_to_4x4() {
        let x = Tensor::filled(&[3, 3], 7.0);
        let p = pad_preserving_gap(&x);
        assert_eq!(p.dims(), &[4, 4]);
        for &v in p.data() {
            assert!((v - 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pad_is_identity_on_even_inputs() {
        let mut rng = Rng::new(47);
        let x = Tensor::rand_uniform(&mut rng, &[4, 6]);
        let p = pad_preserving_gap(&x);
        assert_eq!(p, x); // bitwise
    }

    #[test]
    fn pad_preserves_gap_on_3x4() {
        let mut rng = Rng::new(53);
        let x = Tensor::rand_uniform(&mut rng, &[3, 4]);
        let p = pad_preserving_gap(&x);
        assert_eq!(p.dims(), &[4, 4]);
        assert!((p.mean() - x.mean()).abs() <= 1e-12);
    }

    #[test]
    fn recursive_approx_hand_evaluated() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!((haar_recursive_approx(&x, NormMode::Averaging) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn recursive_approx_constant_image() {
        let x = Tensor::filled(&[32, 32], 0.125);
        assert!((haar_recursive_approx(&x, NormMode::Averaging) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn recursive_approx_equals_mean_on_odd_sizes() {
        let mut rng = Rng::new(59);
        let x = Tensor::rand_uniform(&mut rng, &[7, 5]);
        let got = haar_recursive_approx(&x, NormMode::Averaging);
        assert!((got - x.mean()).abs() <= 1e-10);
    }

    #[test]
    fn recursive_approx_orthonormal_scales_by_two_per_level() {
        let mut rng = Rng::new(61);
        for (size, levels) in [(2usize, 1u32), (8, 3), (16, 4)] {
            let x = Tensor::rand_uniform(&mut rng, &[size, size]);
            let got = haar_recursive_approx(&x, NormMode::Orthonormal);
            let want = 2f64.powi(levels as i32) * x.mean();
            assert!((got - want).abs() / want.abs().max(1e-12) <= 1e-8);
        }
    }

    #[test]
    fn multilevel_without_weights_equals_recursive_approx() {
        let mut rng = Rng::new(67);
        for dims in [[8usize, 8], [7, 5], [16, 4]] {
            let x = Tensor::rand_uniform(&mut rng, &dims);
            let levels = levels_to_scalar(dims[0], dims[1], 2);
            let got =
                dwt_multilevel(&x, &haar_bank(NormMode::Averaging), levels, None).unwrap();
            let want = haar_recursive_approx(&x, NormMode::Averaging);
            assert!((got - want).abs() <= 1e-12, "dims {dims:?}");
        }
    }

    #[test]
    fn multilevel_degenerate_weights_match_weightless_path() {
        let mut rng = Rng::new(71);
        let x = Tensor::rand_uniform(&mut rng, &[8, 8]);
        let bank = haar_bank(NormMode::Averaging);
        let plain = dwt_multilevel(&x, &bank, 3, None).unwrap();
        let weighted = dwt_multilevel(&x, &bank, 3, Some(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((plain - weighted).abs() <= 1e-15);
    }

    #[test]
    fn multilevel_matches_step_by_step_oracle() {
        let mut rng = Rng::new(73);
        let bank = random_orthogonal_bank(&mut rng, 2).unwrap();
        let x = Tensor::rand_range(&mut rng, &[8, 8], -1.0, 1.0);
        let weights = [0.9, 0.3, -0.2, 0.1];

        // Oracle: unroll three explicit conv levels by hand.
        let mut cur = x.reshape(&[1, 1, 8, 8]).unwrap();
        for _ in 0..3 {
            let s = dwt2d_conv(&cur, &bank).unwrap();
            let mut acc = s.a.scale(weights[0]);
            acc.axpy(weights[1], &s.v).unwrap();
            acc.axpy(weights[2], &s.h).unwrap();
            acc.axpy(weights[3], &s.d).unwrap();
            cur = acc;
        }
        let want = cur.data()[0];

        let got = dwt_multilevel(&x, &bank, 3, Some(&weights)).unwrap();
        assert!((got - want).abs() <= 1e-12);

        let plain_want = {
            let mut cur = x.reshape(&[1, 1, 8, 8]).unwrap();
            for _ in 0..3 {
                cur = dwt2d_conv(&cur, &bank).unwrap().a;
            }
            cur.data()[0]
        };
        let plain_got = dwt_multilevel(&x, &bank, 3, None).unwrap();
        assert!((plain_got - plain_want).abs() <= 1e-12);
    }

    #[test]
    fn multilevel_rejects_zero_levels_and_undersized_level_count() {
        let x = Tensor::zeros(&[8, 8]);
        let bank = haar_bank(NormMode::Averaging);
        assert!(dwt_multilevel(&x, &bank, 0, None).is_err());
        assert!(dwt_multilevel(&x, &bank, 2, None).is_err()); // 8x8 needs 3
    }

    #[test]
    fn pad_nchw_backward_is_the_adjoint() {
        // <P(x), g> == <x, P^T(g)> for random x, g.
        let mut rng = Rng::new(79);
        let x = Tensor::rand_range(&mut rng, &[2, 2, 3, 5], -1.0, 1.0);
        let padded = pad_nchw_preserving_gap(&x, 4, 6).unwrap();
        let g = Tensor::rand_range(&mut rng, &[2, 2, 4, 6], -1.0, 1.0);
        let lhs = padded.dot(&g).unwrap();
        let gt = pad_nchw_preserving_gap_backward(&g, 3, 5).unwrap();
        let rhs = x.dot(&gt).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12);
    }
}
