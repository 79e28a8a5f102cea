//! Datasets: deterministic synthetic texture classification (sinusoidal
//! gratings at class-specific frequency/orientation plus uniform noise) and
//! the IDX binary raster format, with normalization and stratified
//! splitting. Everything is a pure function of its seeds.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const IMAGE_SIZE: usize = 32;

/// (cycles per image, orientation in degrees) per class, chosen so the
/// classes separate in wavelet subband energies: classes 0 and 1 share a
/// frequency but differ by 90 degrees.
const CLASS_GRATINGS: [(f64, f64); 8] = [
    (4.0, 0.0),
    (4.0, 90.0),
    (2.0, 45.0),
    (6.0, 135.0),
    (3.0, 0.0),
    (5.0, 90.0),
    (6.0, 60.0),
    (3.0, 30.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// N x C x H x W pixel data.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.ndim() != 4 || images.dims()[0] != labels.len() {
            return Err(Error::Shape(format!(
                "dataset: images {:?} vs {} labels",
                images.dims(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Assemble the images and labels at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let dims = self.images.dims();
        let sample = dims[1] * dims[2] * dims[3];
        let mut out = Tensor::zeros(&[indices.len(), dims[1], dims[2], dims[3]]);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            out.data_mut()[row * sample..(row + 1) * sample]
                .copy_from_slice(&self.images.data()[i * sample..(i + 1) * sample]);
            labels.push(self.labels[i]);
        }
        (out, labels)
    }
}

/// Deterministic grating dataset: class k is a sinusoid at a fixed
/// (frequency, orientation) pair with random phase, plus uniform noise of
/// total amplitude 0.3. Pixels stay inside [0, 1]. Labels cycle through the
/// classes, so counts are balanced to within one.
pub fn synth_textures(seed: u64, n: usize, k: usize) -> Result<Dataset> {
    if !(2..=8).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "class count must be in 2..=8, got {k}"
        )));
    }
    if n < 10 * k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for {k} classes, got {n}",
            10 * k
        )));
    }
    let mut rng = Rng::new(seed);
    let s = IMAGE_SIZE;
    let mut images = Tensor::zeros(&[n, 1, s, s]);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        labels.push(label);
        let (freq, theta_deg) = CLASS_GRATINGS[label];
        let theta = theta_deg.to_radians();
        let (dir_x, dir_y) = (theta.cos(), theta.sin());
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        let base = i * s * s;
        for row in 0..s {
            for col in 0..s {
                let t = std::f64::consts::TAU * freq * (dir_x * col as f64 + dir_y * row as f64)
                    / s as f64;
                let signal = 0.5 + 0.3 * (t + phase).sin();
                let noise = rng.uniform(-0.15, 0.15);
                images.data_mut()[base + row * s + col] = (signal + noise).clamp(0.0, 1.0);
            }
        }
    }
    Dataset::new(images, labels, k)
}

/// Global mean and standard deviation of a dataset's pixels.
pub fn mean_std(ds: &Dataset) -> (f64, f64) {
    let mean = ds.images.mean();
    let var = ds
        .images
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / ds.images.len() as f64;
    (mean, var.sqrt())
}

/// Shift and scale every pixel: (x - mean) / std.
pub fn normalize(ds: &Dataset, mean: f64, std: f64) -> Result<Dataset> {
    if std <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "normalize: std must be positive, got {std}"
        )));
    }
    let mut images = ds.images.clone();
    images
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = (*v - mean) / std);
    Dataset::new(images, ds.labels.clone(), ds.classes)
}

/// Deterministic stratified split: per class, indices are shuffled by the
/// seed and the first `ratio` share goes to the training half.
pub fn split(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must be in [0, 1], got {ratio}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        rng.shuffle(&mut members);
        let take = (members.len() as f64 * ratio).round() as usize;
        train_idx.extend_from_slice(&members[..take]);
        test_idx.extend_from_slice(&members[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let (train_images, train_labels) = ds.batch(&train_idx);
    let (test_images, test_labels) = ds.batch(&test_idx);
    Ok((
        Dataset::new(train_images, train_labels, ds.classes)?,
        Dataset::new(test_images, test_labels, ds.classes)?,
    ))
}

const IDX_DTYPE_U8: u8 = 0x08;

/// Parse an IDX file: 0x00 0x00 dtype ndim, big-endian u32 dims, raw
/// unsigned bytes. Returns the dims and the payload.
fn parse_idx<'a>(bytes: &'a [u8], path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let fail = |offset: usize, what: &str| {
        Error::Io(format!(
            "{}: {what} at byte offset {offset}",
            path.display()
        ))
    };
    if bytes.len() < 4 {
        return Err(fail(bytes.len(), "truncated header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(0, "bad magic (leading bytes must be zero)"));
    }
    if bytes[2] != IDX_DTYPE_U8 {
        return Err(fail(2, "unsupported dtype (only 0x08 unsigned byte)"));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(fail(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(fail(bytes.len(), "truncated dimension table"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 4 + 4 * i;
        let d = u32::from_be_bytes([
            bytes[off],
            bytes[off + 1],
            bytes[off + 2],
            bytes[off + 3],
        ]) as usize;
        if d == 0 {
            return Err(fail(off, "zero-sized dimension"));
        }
        dims.push(d);
    }
    let expect: usize = dims.iter().product();
    if bytes.len() < header + expect {
        return Err(fail(bytes.len(), "truncated payload"));
    }
    Ok((dims, &bytes[header..header + expect]))
}

/// Read an IDX image file (3-D N x H x W or 4-D N x C x H x W) as a dataset
/// with pixels scaled to [0, 1]. Labels default to zero; pair with
/// `read_idx_with_labels` for labeled data.
pub fn read_idx(path: &Path) -> Result<Dataset> {
    let images = read_idx_images(path)?;
    let n = images.dims()[0];
    Dataset::new(images, vec![0; n], 1)
}

pub fn read_idx_with_labels(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != images.dims()[0] {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.dims()[0],
            labels.len()
        )));
    }
    let classes = labels.iter().max().copied().unwrap_or(0) + 1;
    Dataset::new(images, labels, classes)
}

fn read_idx_images(path: &Path) -> Result<Tensor> {
    let bytes =
        fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (dims, payload) = parse_idx(&bytes, path)?;
    let shape: Vec<usize> = match dims.len() {
        3 => vec![dims[0], 1, dims[1], dims[2]],
        4 => dims.clone(),
        other => {
            return Err(Error::Io(format!(
                "{}: image file must be 3-D or 4-D, got {other} dims",
                path.display()
            )))
        }
    };
    let data: Vec<f64> = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(&shape, data)
}

fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes =
        fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (dims, payload) = parse_idx(&bytes, path)?;
    if dims.len() != 1 {
        return Err(Error::Io(format!(
            "{}: label file must be 1-D, got {} dims",
            path.display(),
            dims.len()
        )));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Write a dataset as an IDX image file plus an IDX label file. Pixels are
/// clamped to [0, 1] and quantized to bytes; datasets that came from IDX
/// files survive the round trip bit for bit.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let dims = ds.images.dims();
    let mut img = Vec::with_capacity(4 + 16 + ds.images.len());
    let (ndim, shape): (u8, Vec<usize>) = if dims[1] == 1 {
        (3, vec![dims[0], dims[2], dims[3]])
    } else {
        (4, dims.to_vec())
    };
    img.extend_from_slice(&[0, 0, IDX_DTYPE_U8, ndim]);
    for d in shape {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(
        ds.images
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(images_path, img)
        .map_err(|e| Error::Io(format!("{}: {e}", images_path.display())))?;

    let mut lab = Vec::with_capacity(4 + 4 + ds.labels.len());
    lab.extend_from_slice(&[0, 0, IDX_DTYPE_U8, 1]);
    lab.extend_from_slice(&(ds.labels.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    fs::write(labels_path, lab)
        .map_err(|e| Error::Io(format!("{}: {e}", labels_path.display())))
}
