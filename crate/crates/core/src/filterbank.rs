//! Filter-bank construction: the fixed Haar bank, random orthonormal banks
//! via Gram-Schmidt, and the channel-size to bank assignment used by the
//! grouped compression path (one bank per channel group, wide layers split
//! into 512-sized chunks with their own banks).

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::wavelet::{NormMode, WaveletBank};

/// Nominal residual-network channel groups the assignment covers.
pub const GROUP_SIZES: [usize; 4] = [64, 128, 256, 512];

/// Nominal chunk width for the wide (1024/2048) layers.
pub const CHUNK_SIZE: usize = 512;

/// The 2-tap Haar bank. Orthonormal taps are [1, 1]/sqrt(2) and
/// [1, -1]/sqrt(2); averaging taps are [1, 1]/2 and [1, -1]/2, whose
/// approximation filter is the plain 2x2 block mean.
pub fn haar_bank(mode: NormMode) -> WaveletBank {
    let s = match mode {
        NormMode::Orthonormal => std::f64::consts::FRAC_1_SQRT_2,
        NormMode::Averaging => 0.5,
    };
    WaveletBank::from_taps(&[s, s], &[s, -s], mode).expect("valid taps")
}

/// Classical Gram-Schmidt with one re-orthogonalization pass.
///
/// Orthonormalizes `vectors` in order, preserving the span. Fails when a
/// vector is (numerically) in the span of its predecessors, in which case
/// the caller should draw fresh inputs.
pub fn gram_schmidt(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("gram_schmidt: no vectors".into()));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("gram_schmidt: vectors of unequal length".into()));
    }
    if vectors.len() > dim {
        return Err(Error::InvalidArgument(format!(
            "gram_schmidt: {} vectors cannot be independent in dimension {}",
            vectors.len(),
            dim
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (k, v) in vectors.iter().enumerate() {
        let mut u = v.clone();
        // Two projection passes; the second cleans up the rounding the
        // first leaves behind.
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = u.iter().zip(b).map(|(a, c)| a * c).sum();
                for (ui, bi) in u.iter_mut().zip(b) {
                    *ui -= dot * bi;
                }
            }
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return Err(Error::DependentVectors(format!(
                "vector {k} has residual norm {norm:.3e} (< 1e-8) against its predecessors; \
                 draw new random inputs"
            )));
        }
        u.iter_mut().for_each(|x| *x /= norm);
        basis.push(u);
    }
    Ok(basis)
}

/// Draw four d^2-vectors uniform in [-1, 1], orthonormalize them, and shape
/// them into a bank. The approximation filter's sign is fixed so its entry
/// sum is positive, keeping generated banks reproducible bit for bit.
pub fn random_orthogonal_bank(rng: &mut Rng, d: usize) -> Result<WaveletBank> {
    if !(2..=5).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "filter size d must be in 2..=5, got {d}"
        )));
    }
    let n = d * d;
    let mut attempts = 0;
    let ortho = loop {
        let draws: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        match gram_schmidt(&draws) {
            Ok(basis) => break basis,
            Err(Error::DependentVectors(_)) if attempts < 5 => attempts += 1,
            Err(Error::DependentVectors(msg)) => {
                return Err(Error::DependentVectors(format!(
                    "{} dependent draws in a row ({msg}); rng state {:016x?}",
                    attempts + 1,
                    rng.state()
                )))
            }
            Err(e) => return Err(e),
        }
    };
    let mut filters: Vec<Tensor> = ortho
        .into_iter()
        .map(|v| Tensor::new(&[d, d], v).expect("d*d values"))
        .collect();
    if filters[0].data().iter().sum::<f64>() < 0.0 {
        filters[0] = filters[0].scale(-1.0);
    }
    let [f_a, f_v, f_h, f_d]: [Tensor; 4] = filters.try_into().expect("four filters");
    WaveletBank::from_filters([f_a, f_v, f_h, f_d], NormMode::Orthonormal)
}

/// Banks assigned to channel-group sizes, scaled down by `scale` so the
/// same chunking rules can be exercised on small machines: group sizes
/// become 64/s .. 512/s and the wide-layer chunk becomes 512/s.
///
/// Wide layers use the 512-group bank for their first chunk; the 1024-wide
/// layer's second chunk takes `extra[0]`, and the 2048-wide layer's
/// remaining three chunks take `extra[1..4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterAssignment {
    d: usize,
    scale: usize,
    group_banks: [WaveletBank; 4],
    extra_banks: [WaveletBank; 4],
}

impl FilterAssignment {
    pub fn from_parts(
        d: usize,
        scale: usize,
        group_banks: [WaveletBank; 4],
        extra_banks: [WaveletBank; 4],
    ) -> Result<Self> {
        validate_scale(scale)?;
        for bank in group_banks.iter().chain(extra_banks.iter()) {
            if bank.d() != d {
                return Err(Error::InvalidArgument(format!(
                    "assignment mixes filter sizes: expected d = {d}, found {}",
                    bank.d()
                )));
            }
        }
        Ok(FilterAssignment {
            d,
            scale,
            group_banks,
            extra_banks,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Group sizes after scaling, smallest first.
    pub fn group_sizes(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for (o, g) in out.iter_mut().zip(GROUP_SIZES) {
            *o = g / self.scale;
        }
        out
    }

    /// Chunk width for the wide layers after scaling.
    pub fn chunk_size(&self) -> usize {
        CHUNK_SIZE / self.scale
    }

    pub fn bank_for_group(&self, size: usize) -> Option<&WaveletBank> {
        self.group_sizes()
            .iter()
            .position(|&g| g == size)
            .map(|i| &self.group_banks[i])
    }

    pub fn group_banks(&self) -> &[WaveletBank; 4] {
        &self.group_banks
    }

    pub fn extra_banks(&self) -> &[WaveletBank; 4] {
        &self.extra_banks
    }

    /// Banks applied chunk by chunk to a layer of `channels` channels.
    /// Group-sized layers get their single group bank; 2x- and 4x-chunk
    /// layers (the 1024/2048 equivalents) get one bank per chunk.
    pub fn chunk_banks(&self, channels: usize) -> Result<Vec<&WaveletBank>> {
        let sizes = self.group_sizes();
        if sizes.contains(&channels) {
            return Ok(vec![self.bank_for_group(channels).expect("present")]);
        }
        let chunk = self.chunk_size();
        if channels == 2 * chunk {
            return Ok(vec![&self.group_banks[3], &self.extra_banks[0]]);
        }
        if channels == 4 * chunk {
            return Ok(vec![
                &self.group_banks[3],
                &self.extra_banks[1],
                &self.extra_banks[2],
                &self.extra_banks[3],
            ]);
        }
        Err(Error::InvalidArgument(format!(
            "unsupported channel count {channels}; supported: {sizes:?} plus wide layers {} and {}",
            2 * chunk,
            4 * chunk
        )))
    }

    /// All banks with stable slot labels, group banks first.
    pub fn labeled_banks(&self) -> Vec<(String, &WaveletBank)> {
        let mut out = Vec::with_capacity(8);
        for (size, bank) in GROUP_SIZES.iter().zip(&self.group_banks) {
            out.push((format!("g{size}"), bank));
        }
        for (i, bank) in self.extra_banks.iter().enumerate() {
            out.push((format!("x{i}"), bank));
        }
        out
    }
}

fn validate_scale(scale: usize) -> Result<()> {
    if scale == 0 || GROUP_SIZES[0] % scale != 0 {
        return Err(Error::InvalidArgument(format!(
            "scale factor must divide {}, got {scale}",
            GROUP_SIZES[0]
        )));
    }
    Ok(())
}

/// Fresh assignment at full channel widths: one bank per group size plus
/// the four extra chunk banks, all drawn deterministically from `rng`.
pub fn build_assignment(rng: &mut Rng, d: usize) -> Result<FilterAssignment> {
    build_assignment_scaled(rng, d, 1)
}

/// `build_assignment` with channel widths divided by `scale`.
pub fn build_assignment_scaled(rng: &mut Rng, d: usize, scale: usize) -> Result<FilterAssignment> {
    validate_scale(scale)?;
    let mut draw = || random_orthogonal_bank(rng, d);
    let group_banks = [draw()?, draw()?, draw()?, draw()?];
    let extra_banks = [draw()?, draw()?, draw()?, draw()?];
    FilterAssignment::from_parts(d, scale, group_banks, extra_banks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;
    use crate::wavelet::dwt2d_conv;

    fn assert_gram_identity(vectors: &[Vec<f64>], tol: f64) {
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - want).abs() <= tol,
                    "gram[{i}][{j}] = {dot}, want {want}"
                );
            }
        }
    }

    #[test]
    fn gram_schmidt_hand_example() {
        let input = vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]];
        let out = gram_schmidt(&input).unwrap();
        assert!((out[0][0] - 1.0).abs() < 1e-15);
        assert!(out[0][1..].iter().all(|&v| v.abs() < 1e-15));
        assert!((out[1][1] - 1.0).abs() < 1e-15);
        assert!(out[1][0].abs() < 1e-15);
        assert!(out[1][2..].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn gram_schmidt_fixed_point_on_orthonormal_input() {
        let input = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let out = gram_schmidt(&input).unwrap();
        for (a, b) in input.iter().zip(&out) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gram_schmidt_seed_42_gram_matrix_is_identity() {
        let mut rng = Rng::new(42);
        let input: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let out = gram_schmidt(&input).unwrap();
        assert_gram_identity(&out, 1e-12);
    }

    #[test]
    fn gram_schmidt_rejects_dependent_input() {
        let input = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0]];
        let err = gram_schmidt(&input).unwrap_err();
        assert!(matches!(err, Error::DependentVectors(_)), "{err}");
    }

    #[test]
    fn random_bank_gram_matrix_is_identity() {
        for d in 2..=5 {
            let mut rng = Rng::new(100 + d as u64);
            let bank = random_orthogonal_bank(&mut rng, d).unwrap();
            assert!(bank.is_orthonormal(1e-10), "d = {d}");
        }
    }

    #[test]
    fn random_bank_is_deterministic_per_seed() {
        let a = random_orthogonal_bank(&mut Rng::new(9), 3).unwrap();
        let b = random_orthogonal_bank(&mut Rng::new(9), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_bank_approximation_sum_is_positive() {
        for seed in 0..20 {
            let bank = random_orthogonal_bank(&mut Rng::new(seed), 2).unwrap();
            assert!(bank.approximation().data().iter().sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn random_bank_rejects_bad_filter_size() {
        assert!(random_orthogonal_bank(&mut Rng::new(1), 1).is_err());
        assert!(random_orthogonal_bank(&mut Rng::new(1), 6).is_err());
    }

    #[test]
    fn random_d2_bank_preserves_energy() {
        // Parseval for the d = 2 analysis: four orthonormal filters span the
        // whole 2x2 block space and stride-2 windows tile the input.
        let mut rng = Rng::new(1234);
        let bank = random_orthogonal_bank(&mut rng, 2).unwrap();
        let x = Tensor::rand_range(&mut rng, &[1, 1, 8, 8], -1.0, 1.0);
        let s = dwt2d_conv(&x, &bank).unwrap();
        let rel = (x.norm_sq() - s.total_energy()).abs() / x.norm_sq();
        assert!(rel <= 1e-8);
    }

    #[test]
    fn haar_bank_filter_values() {
        let ortho = haar_bank(NormMode::Orthonormal);
        let want = Tensor::filled(&[2, 2], 0.5);
        assert!(max_abs_diff(ortho.approximation(), &want) <= 1e-15);
        assert!(ortho.is_orthonormal(1e-12));

        let avg = haar_bank(NormMode::Averaging);
        let want = Tensor::filled(&[2, 2], 0.25);
        assert!(max_abs_diff(avg.approximation(), &want) <= 1e-15);
    }

    #[test]
    fn assignment_has_four_group_banks_plus_four_extras() {
        let mut rng = Rng::new(5);
        let a = build_assignment(&mut rng, 2).unwrap();
        assert_eq!(a.labeled_banks().len(), 8);
        assert_eq!(a.group_sizes(), [64, 128, 256, 512]);
        assert_eq!(a.chunk_size(), 512);
    }

    #[test]
    fn chunk_layout_for_wide_layers() {
        let mut rng = Rng::new(6);
        let a = build_assignment(&mut rng, 2).unwrap();
        let for_1024 = a.chunk_banks(1024).unwrap();
        assert_eq!(for_1024.len(), 2);
        assert_eq!(for_1024[0], &a.group_banks()[3]);
        assert_eq!(for_1024[1], &a.extra_banks()[0]);

        let for_2048 = a.chunk_banks(2048).unwrap();
        assert_eq!(for_2048.len(), 4);
        assert_eq!(for_2048[0], &a.group_banks()[3]);
        for i in 0..3 {
            assert_eq!(for_2048[i + 1], &a.extra_banks()[i + 1]);
        }
    }

    #[test]
    fn chunk_banks_rejects_unsupported_sizes() {
        let mut rng = Rng::new(7);
        let a = build_assignment(&mut rng, 2).unwrap();
        let err = a.chunk_banks(96).unwrap_err().to_string();
        assert!(err.contains("96") && err.contains("512"), "{err}");
    }

    #[test]
    fn scaled_assignment_scales_groups_and_chunks() {
        let mut rng = Rng::new(8);
        let a = build_assignment_scaled(&mut rng, 2, 8).unwrap();
        assert_eq!(a.group_sizes(), [8, 16, 32, 64]);
        assert_eq!(a.chunk_size(), 64);
        assert_eq!(a.chunk_banks(128).unwrap().len(), 2);
        assert_eq!(a.chunk_banks(256).unwrap().len(), 4);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(build_assignment_scaled(&mut Rng::new(1), 2, 0).is_err());
        assert!(build_assignment_scaled(&mut Rng::new(1), 2, 3).is_err());
    }

    #[test]
    fn assignment_deterministic_from_seed_and_d() {
        let a = build_assignment(&mut Rng::new(77), 3).unwrap();
        let b = build_assignment(&mut Rng::new(77), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gram_sweep_over_seeds_and_filter_sizes() {
        for d in 2..=5usize {
            for seed in 0..25u64 {
                let bank = random_orthogonal_bank(&mut Rng::new(seed * 31 + d as u64), d).unwrap();
                assert!(bank.is_orthonormal(1e-10), "seed {seed} d {d}");
            }
        }
    }
}
