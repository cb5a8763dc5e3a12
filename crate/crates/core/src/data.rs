//! Datasets: IDX (MNIST) loading, a synthetic class-blob generator,
//! Gaussian noise injection and seeded batching.

use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images in `[N, C, H, W]` layout with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::Data(format!("images must be NxCxHxW, got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Data(format!("{} images but {} labels", images.shape()[0], labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Dataset { name: name.into(), images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample `[C, H, W]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Gathers the given samples into a batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (self.images.select_rows(indices), indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.batch(indices);
        Dataset { name: self.name.clone(), images, labels, num_classes: self.num_classes }
    }

    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Seeded split: the last `round(fraction * N)` samples of a shuffled
    /// order form the second part.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = ((self.len() as f64) * fraction).round() as usize;
        let cut = self.len() - held.min(self.len());
        let (mut a, mut b) = (order[..cut].to_vec(), order[cut..].to_vec());
        a.sort_unstable();
        b.sort_unstable();
        (self.subset(&a), self.subset(&b))
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated(format!("{what}: header ends at byte {}", bytes.len())))
}

fn check_magic(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic { expected: format!("{expected:#010x}"), found: format!("{found:#010x}") });
    }
    Ok(())
}

/// Reads an IDX image/label pair (optionally gzip-compressed). Pixel bytes
/// are scaled by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let img = read_maybe_gz(images_path)?;
    let lab = read_maybe_gz(labels_path.as_ref())?;

    check_magic(be_u32(&img, 0, "images")?, IDX_IMAGES_MAGIC)?;
    let n = be_u32(&img, 4, "images")? as usize;
    let rows = be_u32(&img, 8, "images")? as usize;
    let cols = be_u32(&img, 12, "images")? as usize;
    let pixels = &img[16..];
    if pixels.len() != n * rows * cols {
        return Err(Error::Truncated(format!(
            "images declare {n}x{rows}x{cols} pixels, file holds {}",
            pixels.len()
        )));
    }

    check_magic(be_u32(&lab, 0, "labels")?, IDX_LABELS_MAGIC)?;
    let nl = be_u32(&lab, 4, "labels")? as usize;
    let labels = &lab[8..];
    if labels.len() != nl {
        return Err(Error::Truncated(format!("labels declare {nl} entries, file holds {}", labels.len())));
    }
    if nl != n {
        return Err(Error::Data(format!("{n} images but {nl} labels")));
    }

    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let name = images_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(name, Tensor::from_vec(&[n, 1, rows, cols], data), labels, num_classes)
}

/// Writes a single-channel dataset as an uncompressed IDX pair, rounding
/// pixels to the nearest byte.
pub fn write_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let s = ds.images.shape();
    if s[1] != 1 {
        return Err(Error::Data("IDX images must have a single channel".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.images.len());
    for v in [IDX_IMAGES_MAGIC, s[0] as u32, s[2] as u32, s[3] as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(ds.images.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABELS_MAGIC, ds.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    std::fs::write(ip, img).map_err(|e| Error::io(ip, e))?;
    std::fs::write(lp, lab).map_err(|e| Error::io(lp, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    [dir.join(stem), dir.join(format!("{stem}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Data(format!("{stem}[.gz] not found in {}", dir.display())))
}

/// Loads `train-*` or `t10k-*` IDX files from an MNIST directory.
pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit) -> Result<Dataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let mut ds = load_idx(
        find_file(dir, &format!("{prefix}-images-idx3-ubyte"))?,
        find_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?,
    )?;
    ds.name = format!("mnist-{prefix}");
    Ok(ds)
}

/// Data directory: `ENTPRUNE_DATA_DIR` if set, else the bundled
/// `data/mnist` at the workspace root.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("ENTPRUNE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation in normalized pixel units.
    pub std: f64,
    pub seed: u64,
}

/// `n` draws from `N(0, std^2)`.
pub fn gaussian_noise(n: usize, std: f64, seed: u64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, std).expect("finite non-negative std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// `pixel + N(0, std^2)`, clamped back to `[0, 1]`.
pub fn add_gaussian_noise(ds: &Dataset, spec: NoiseSpec) -> Result<Dataset> {
    if !(spec.std >= 0.0 && spec.std.is_finite()) {
        return Err(Error::Config(format!("noise std must be finite and >= 0, got {}", spec.std)));
    }
    if spec.std == 0.0 {
        return Ok(ds.clone());
    }
    let noise = gaussian_noise(ds.images.len(), spec.std, spec.seed);
    let data = ds.images.data().iter().zip(noise).map(|(&p, e)| (p + e).clamp(0.0, 1.0)).collect();
    let mut out = ds.clone();
    out.images = Tensor::from_vec(ds.images.shape(), data);
    out.name = format!("{}+noise{}", ds.name, spec.std);
    Ok(out)
}

/// Sample indices grouped into batches. With a seed the order is a seeded
/// permutation; the last partial batch is kept.
pub fn batches(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Per-pixel standard deviation around each class prototype.
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { samples: 1000, classes: 4, channels: 1, height: 12, width: 12, spread: 0.15, seed: 0 }
    }
}

/// Gaussian blobs: every class owns a prototype made of two bright
/// Gaussian bumps; samples are noisy copies clamped to `[0, 1]`.
pub fn synthetic(spec: &SyntheticSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (c, h, w) = (spec.channels, spec.height, spec.width);
    let plane = c * h * w;
    let mut protos = Vec::with_capacity(spec.classes);
    for _ in 0..spec.classes {
        let mut p = vec![0.0; plane];
        for _ in 0..2 {
            let ch = rand::Rng::random_range(&mut rng, 0..c);
            let cy = rand::Rng::random_range(&mut rng, 0.0..h as f64);
            let cx = rand::Rng::random_range(&mut rng, 0.0..w as f64);
            let sigma = (h.min(w) as f64 / 6.0).max(0.75);
            for y in 0..h {
                for x in 0..w {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    p[(ch * h + y) * w + x] += (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        protos.push(p);
    }
    let normal = Normal::new(0.0, spec.spread.max(0.0)).unwrap();
    let mut data = Vec::with_capacity(spec.samples * plane);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let label = i % spec.classes;
        labels.push(label);
        data.extend(protos[label].iter().map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0)));
    }
    Dataset {
        name: format!("synthetic-{}x{}", spec.classes, spec.samples),
        images: Tensor::from_vec(&[spec.samples, c, h, w], data),
        labels,
        num_classes: spec.classes,
    }
}
