//! `bench`: wall-clock comparison of the two transform paths and of the
//! gap vs. grouped-wavelet squeeze, printed as a machine-readable table.

use std::sync::Arc;
use std::time::Instant;

use wavenet_core::attention::{AttentionBlock, SqueezeMode};
use wavenet_core::filterbank::{build_assignment_scaled, haar_bank};
use wavenet_core::wavelet::{dwt2d_conv, dwt2d_matmul, NormMode};
use wavenet_core::{Rng, Tensor};

use crate::error::{CliError, Result};

pub fn cmd_bench(sizes: &str, seed: u64) -> Result<i32> {
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Format(format!("malformed size '{s}'")))
        })
        .collect::<Result<_>>()?;
    for &s in &sizes {
        if s < 2 || s % 2 != 0 {
            return Err(CliError::Format(format!(
                "sizes must be even and >= 2, got {s}"
            )));
        }
    }

    let bank = haar_bank(NormMode::Orthonormal);
    let assignment = Arc::new(build_assignment_scaled(&mut Rng::new(seed), 2, 8)?);
    let channels = 32;
    let mut rng = Rng::new(seed ^ 0xbe);
    let gap = AttentionBlock::new(channels, 4, SqueezeMode::Gap, None, &mut rng)?;
    let wc = AttentionBlock::new(
        channels,
        4,
        SqueezeMode::WavenetC,
        Some(assignment),
        &mut rng,
    )?;

    println!("column size dwt_matmul_us dwt_conv_us squeeze_gap_us squeeze_wavenet_c_us overhead_pct");
    for &size in &sizes {
        let image = Tensor::rand_uniform(&mut rng, &[size, size]);
        let nchw = image.reshape(&[1, 1, size, size])?;
        let t_matmul = median_us(|| {
            dwt2d_matmul(&image, &bank).expect("even size");
        });
        let t_conv = median_us(|| {
            dwt2d_conv(&nchw, &bank).expect("valid size");
        });

        let batch = Tensor::rand_uniform(&mut rng, &[8, channels, size, size]);
        let t_gap = median_us(|| {
            gap.squeeze(&batch).expect("squeeze");
        });
        let t_wc = median_us(|| {
            wc.squeeze(&batch).expect("squeeze");
        });
        let overhead = (t_wc - t_gap) / t_gap * 100.0;
        println!(
            "row {size} {t_matmul:.1} {t_conv:.1} {t_gap:.1} {t_wc:.1} {overhead:.1}"
        );
    }
    Ok(0)
}

fn median_us(mut f: impl FnMut()) -> f64 {
    const WARMUP: usize = 3;
    const RUNS: usize = 9;
    for _ in 0..WARMUP {
        f();
    }
    let mut times: Vec<f64> = (0..RUNS)
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    times[RUNS / 2]
}
