//! Property tests for the transform invariants: cross-path equivalence,
//! recursive approximation vs. the mean, energy balance, reconstruction,
//! and the algebra the tensor core promises.

use proptest::prelude::*;

use wavenet_core::filterbank::{haar_bank, random_orthogonal_bank};
use wavenet_core::tensor::{self, max_abs_diff, Tensor};
use wavenet_core::wavelet::{
    dwt2d_conv, dwt2d_matmul, haar_recursive_approx, idwt2d, NormMode,
};
use wavenet_core::Rng;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    Tensor::rand_uniform(&mut Rng::new(seed), &[h, w])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursive_haar_equals_mean(h in 1usize..64, w in 1usize..64, seed in 0u64..1000) {
        let x = image(h, w, seed);
        let got = haar_recursive_approx(&x, NormMode::Averaging);
        prop_assert!((got - x.mean()).abs() <= 1e-9);
    }

    #[test]
    fn matmul_and_conv_paths_agree(hh in 1usize..16, hw in 1usize..16, seed in 0u64..1000) {
        let (h, w) = (2 * hh, 2 * hw);
        let x = image(h, w, seed);
        let bank = haar_bank(NormMode::Orthonormal);
        let mat = dwt2d_matmul(&x, &bank).unwrap();
        let conv = dwt2d_conv(&x.reshape(&[1, 1, h, w]).unwrap(), &bank).unwrap();
        for (mb, cb) in mat.as_array().iter().zip(conv.as_array()) {
            let flat = cb.reshape(mb.dims()).unwrap();
            prop_assert!(max_abs_diff(mb, &flat) <= 1e-10);
        }
    }

    #[test]
    fn round_trip_reconstructs(hh in 1usize..12, hw in 1usize..12, seed in 0u64..1000) {
        let (h, w) = (2 * hh, 2 * hw);
        let x = image(h, w, seed);
        let bank = if seed % 2 == 0 {
            haar_bank(NormMode::Orthonormal)
        } else {
            random_orthogonal_bank(&mut Rng::new(seed), 2).unwrap()
        };
        let back = idwt2d(&dwt2d_conv(&x.reshape(&[1, 1, h, w]).unwrap(), &bank).unwrap(), &bank)
            .unwrap()
            .reshape(&[h, w])
            .unwrap();
        prop_assert!(max_abs_diff(&back, &x) <= 1e-8);
    }

    #[test]
    fn orthonormal_transform_preserves_energy(hh in 1usize..12, seed in 0u64..1000) {
        let h = 2 * hh;
        let x = Tensor::rand_range(&mut Rng::new(seed), &[1, 1, h, h], -1.0, 1.0);
        let bank = random_orthogonal_bank(&mut Rng::new(seed ^ 0x7777), 2).unwrap();
        let s = dwt2d_conv(&x, &bank).unwrap();
        let rel = (x.norm_sq() - s.total_energy()).abs() / x.norm_sq().max(1e-12);
        prop_assert!(rel <= 1e-8);
    }

    #[test]
    fn constant_images_have_zero_detail_bands(c in -4.0f64..4.0, hh in 1usize..8) {
        let h = 2 * hh;
        let x = Tensor::filled(&[1, 1, h, h], c);
        let s = dwt2d_conv(&x, &haar_bank(NormMode::Orthonormal)).unwrap();
        for band in [&s.v, &s.h, &s.d] {
            for &v in band.data() {
                prop_assert!(v.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matmul_is_associative(seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let a = Tensor::rand_range(&mut rng, &[4, 5], -1.0, 1.0);
        let b = Tensor::rand_range(&mut rng, &[5, 3], -1.0, 1.0);
        let c = Tensor::rand_range(&mut rng, &[3, 6], -1.0, 1.0);
        let left = tensor::matmul(&tensor::matmul(&a, &b).unwrap(), &c).unwrap();
        let right = tensor::matmul(&a, &tensor::matmul(&b, &c).unwrap()).unwrap();
        let scale = left.norm_sq().sqrt().max(1.0);
        prop_assert!(max_abs_diff(&left, &right) / scale <= 1e-9);
    }

    #[test]
    fn mean_padding_preserves_the_mean(h in 1usize..33, w in 1usize..33, seed in 0u64..1000) {
        let x = image(h, w, seed);
        let padded = wavenet_core::wavelet::pad_preserving_gap(&x);
        prop_assert!((padded.mean() - x.mean()).abs() <= 1e-12);
        prop_assert_eq!(padded.dims()[0] % 2, 0);
        prop_assert_eq!(padded.dims()[1] % 2, 0);
    }
}
