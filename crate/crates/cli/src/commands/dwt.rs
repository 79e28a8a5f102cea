//! `dwt`: transform a graymap through one or more wavelet levels and write
//! the final-level subbands as rasters plus an energy summary on stdout.

use std::fs;
use std::path::PathBuf;

use wavenet_core::filterbank::{haar_bank, random_orthogonal_bank};
use wavenet_core::wavelet::{
    dwt2d_conv, dwt2d_matmul, pad_nchw_preserving_gap, pad_preserving_gap, padded_extent,
    NormMode, Subbands,
};
use wavenet_core::Rng;

use crate::error::{CliError, Result};
use crate::pgm::{read_pgm, write_pgm_normalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformPath {
    Matmul,
    Conv,
}

impl TransformPath {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "matmul" => Ok(TransformPath::Matmul),
            "conv" => Ok(TransformPath::Conv),
            other => Err(CliError::Format(format!(
                "unknown path '{other}' (expected matmul|conv)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DwtOptions {
    pub input: PathBuf,
    pub path: TransformPath,
    /// "haar" or "random".
    pub bank: String,
    pub norm: NormMode,
    pub seed: u64,
    pub d: usize,
    pub levels: usize,
    pub out: PathBuf,
}

pub fn parse_norm(s: &str) -> Result<NormMode> {
    match s {
        "orthonormal" => Ok(NormMode::Orthonormal),
        "averaging" => Ok(NormMode::Averaging),
        other => Err(CliError::Format(format!(
            "unknown normalization '{other}' (expected orthonormal|averaging)"
        ))),
    }
}

pub fn cmd_dwt(opts: &DwtOptions) -> Result<i32> {
    if opts.levels < 1 {
        return Err(CliError::Format("levels must be >= 1".into()));
    }
    let bank = match opts.bank.as_str() {
        "haar" => haar_bank(opts.norm),
        "random" => random_orthogonal_bank(&mut Rng::new(opts.seed), opts.d)?,
        other => {
            return Err(CliError::Format(format!(
                "unknown bank '{other}' (expected haar|random)"
            )))
        }
    };
    let image = read_pgm(&opts.input)?;

    let mut cur = image;
    let mut subbands: Option<Subbands> = None;
    for _ in 0..opts.levels {
        let s = match opts.path {
            TransformPath::Matmul => {
                let padded = pad_preserving_gap(&cur);
                dwt2d_matmul(&padded, &bank)?
            }
            TransformPath::Conv => {
                let (h, w) = (cur.dims()[0], cur.dims()[1]);
                let (th, tw) = (padded_extent(h, bank.d()), padded_extent(w, bank.d()));
                let nchw = cur.reshape(&[1, 1, h, w])?;
                let padded = pad_nchw_preserving_gap(&nchw, th, tw)?;
                let s = dwt2d_conv(&padded, &bank)?;
                let (oh, ow) = (s.a.dims()[2], s.a.dims()[3]);
                Subbands::new(
                    s.a.reshape(&[oh, ow])?,
                    s.v.reshape(&[oh, ow])?,
                    s.h.reshape(&[oh, ow])?,
                    s.d.reshape(&[oh, ow])?,
                )?
            }
        };
        cur = s.a.clone();
        subbands = Some(s);
    }
    let subbands = subbands.expect("levels >= 1");

    fs::create_dir_all(&opts.out).map_err(|e| CliError::io(&opts.out, e))?;
    let names = ["a", "v", "h", "d"];
    for (name, band) in names.iter().zip(subbands.as_array()) {
        write_pgm_normalized(&opts.out.join(format!("{name}.pgm")), band)?;
    }
    println!("levels {}", opts.levels);
    println!(
        "subband_size {}x{}",
        subbands.a.dims()[0],
        subbands.a.dims()[1]
    );
    for (name, energy) in names.iter().zip(subbands.energies()) {
        println!("energy {name} {energy:.6e}");
    }
    Ok(0)
}
