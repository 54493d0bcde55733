//! Labeled image datasets: big-endian IDX files and seeded Gaussian blobs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{format_err, invalid, FreqError, Result};
use crate::tensor::DenseTensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: DenseTensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    /// `images` is `(count, channels, h, w)` with values in `[0, 1]`.
    pub fn new(images: DenseTensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(invalid("images", format!("expected (count, c, h, w), got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(invalid("labels", format!("{} labels for {} images", labels.len(), images.shape()[0])));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid("labels", format!("label {l} outside [0, {num_classes})")));
        }
        Ok(Self { images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn images(&self) -> &DenseTensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `(c, h, w)`
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Copies the listed samples into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> (DenseTensor, Vec<usize>) {
        let per: usize = self.sample_shape().iter().product();
        let src = self.images.data();
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (DenseTensor::from_parts(shape, data), labels)
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (images, labels) = self.gather(&idx);
        Self { images, labels, num_classes: self.num_classes }
    }

    /// Reinterprets each sample with a new `(c, h, w)` of equal size.
    pub fn with_sample_shape(self, c: usize, h: usize, w: usize) -> Result<Self> {
        let n = self.len();
        let images = self.images.reshape(vec![n, c, h, w])?;
        Ok(Self { images, ..self })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, field: &'static str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format_err(self.file, format!("truncated while reading {field}")))?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn rest(&self, len: usize, field: &'static str) -> Result<&'a [u8]> {
        self.bytes.get(self.pos..self.pos + len).ok_or_else(|| {
            format_err(self.file, format!("truncated {field}: need {len} bytes, have {}", self.bytes.len() - self.pos))
        })
    }
}

/// Parses IDX image bytes into `(count, 1, rows, cols)` scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<DenseTensor> {
    let mut c = Cursor { bytes, pos: 0, file: "images" };
    let magic = c.u32("magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err("images", format!("magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")));
    }
    let count = c.u32("count")? as usize;
    let rows = c.u32("rows")? as usize;
    let cols = c.u32("cols")? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(format_err("images", format!("empty dimensions {count}x{rows}x{cols}")));
    }
    let pixels = c.rest(count * rows * cols, "pixels")?;
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    DenseTensor::new(vec![count, 1, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut c = Cursor { bytes, pos: 0, file: "labels" };
    let magic = c.u32("magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err("labels", format!("magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")));
    }
    let count = c.u32("count")? as usize;
    Ok(c.rest(count, "labels")?.iter().map(|&l| l as usize).collect())
}

/// Loads an IDX image/label file pair. Labels must be digits `0..10`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| FreqError::Io(format!("{}: {e}", p.display())));
    let images = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    if images.shape()[0] != labels.len() {
        return Err(format_err("count", format!("{} images but {} labels", images.shape()[0], labels.len())));
    }
    LabeledDataset::new(images, labels, 10)
}

/// Serializes images (`count x 1 x rows x cols`, values in `[0, 1]`) as IDX bytes.
pub fn encode_idx_images(images: &DenseTensor) -> Vec<u8> {
    let s = images.shape();
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [s[0], s[2], s[3]] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(images.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn encode_idx_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}

const BLOB_SIGMA: f64 = 0.05;
const BLOB_MIN_SEPARATION: f64 = 0.5;

/// Gaussian clusters around seeded centers in `[0.1, 0.9]^dim`.
///
/// Centers are at least 0.5 apart and `sigma = 0.05`, so classes are
/// separable far beyond 99% Bayes accuracy. Samples are clamped to `[0, 1]`
/// and ordered class by class; images have shape `(count, 1, 1, dim)`.
pub fn synthetic_blobs(num_classes: usize, per_class: usize, dim: usize, seed: u64) -> Result<LabeledDataset> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(invalid("synthetic_blobs", "all sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0usize;
    while centers.len() < num_classes {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid(
                "synthetic_blobs",
                format!("cannot place {num_classes} separated centers in {dim} dims"),
            ));
        }
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..0.9)).collect();
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= BLOB_MIN_SEPARATION);
        if far {
            centers.push(c);
        }
    }
    let noise = Normal::new(0.0, BLOB_SIGMA).expect("positive sigma");
    let mut data = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(center.iter().map(|&m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0)));
            labels.push(class);
        }
    }
    let images = DenseTensor::new(vec![labels.len(), 1, 1, dim], data)?;
    LabeledDataset::new(images, labels, num_classes)
}
