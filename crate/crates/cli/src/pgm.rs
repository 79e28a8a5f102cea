//! Portable graymap raster I/O: reads P2 (ASCII) and P5 (binary) with
//! maxval up to 255, writes P5. Pixels map to f64 in [0, 1].

use std::fs;
use std::path::Path;

use wavenet_core::Tensor;

use crate::error::{CliError, Result};

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let fail = |msg: &str| CliError::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 2 {
        return Err(fail("not a PGM file"));
    }
    let binary = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(fail("not a PGM file (want P2 or P5)")),
    };

    // Header tokens: width, height, maxval; '#' comments run to newline.
    let mut pos = 2;
    let mut token = |bytes: &[u8]| -> Result<(usize, usize)> {
        let mut start = pos;
        loop {
            while start < bytes.len() && bytes[start].is_ascii_whitespace() {
                start += 1;
            }
            if start < bytes.len() && bytes[start] == b'#' {
                while start < bytes.len() && bytes[start] != b'\n' {
                    start += 1;
                }
                continue;
            }
            break;
        }
        let mut end = start;
        while end < bytes.len() && !bytes[end].is_ascii_whitespace() {
            end += 1;
        }
        if start == end {
            return Err(fail("truncated header"));
        }
        pos = end;
        let text = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| fail("header is not ASCII"))?;
        let v = text
            .parse::<usize>()
            .map_err(|_| fail("malformed header number"))?;
        Ok((v, end))
    };
    let (width, _) = token(&bytes)?;
    let (height, _) = token(&bytes)?;
    let (maxval, _) = token(&bytes)?;
    if maxval == 0 || maxval > 255 {
        return Err(fail("maxval must be in 1..=255"));
    }

    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if binary {
        let start = pos + 1; // single whitespace after maxval
        if bytes.len() < start + width * height {
            return Err(fail("truncated pixel data"));
        }
        bytes[start..start + width * height]
            .iter()
            .map(|&b| b as f64 * scale)
            .collect()
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| fail("P2 pixel data is not ASCII"))?;
        let vals: Vec<f64> = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<u32>().map(|v| v as f64 * scale))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| fail("malformed P2 pixel"))?;
        if vals.len() < width * height {
            return Err(fail("truncated pixel data"));
        }
        vals[..width * height].to_vec()
    };
    Tensor::new(&[height, width], data).map_err(CliError::Core)
}

/// Write an H x W tensor as binary PGM, rescaling min..max to 0..255.
/// Bands whose span is numeric dust (below 1e-12) come out all zero, so
/// the two transform paths rasterize identically.
pub fn write_pgm_normalized(path: &Path, image: &Tensor) -> Result<()> {
    let (h, w) = (image.dims()[0], image.dims()[1]);
    let min = image.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = image.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| {
        if span > 1e-12 {
            ((v - min) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Write an H x W tensor of [0, 1] values as binary PGM.
pub fn write_pgm_unit(path: &Path, image: &Tensor) -> Result<()> {
    let (h, w) = (image.dims()[0], image.dims()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_round_trip() {
        let dir = std::env::temp_dir().join("wavenet_pgm_tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unit.pgm");
        let img = Tensor::new(&[2, 3], vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        write_pgm_unit(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.dims(), &[2, 3]);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn p2_with_comments_parses() {
        let dir = std::env::temp_dir().join("wavenet_pgm_tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ascii.pgm");
        fs::write(&path, "P2\n# comment\n3 2\n# another\n100\n0 50 100\n100 50 0\n").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.dims(), &[2, 3]);
        assert!((img.get(&[0, 1]) - 0.5).abs() < 1e-12);
        assert!((img.get(&[1, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_pgm_and_truncation() {
        let dir = std::env::temp_dir().join("wavenet_pgm_tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.pgm");
        fs::write(&path, "P6\n1 1\n255\nxxx").unwrap();
        assert!(read_pgm(&path).is_err());
        fs::write(&path, "P5\n4 4\n255\nxx").unwrap();
        assert!(read_pgm(&path).is_err());
    }
}
