//! Datasets: IDX (MNIST-family) files, synthetic Gaussian blobs, batching.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{streams, Mat, Rng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the default directory for IDX datasets.
pub const DATA_ROOT_ENV: &str = "CIMTRAIN_DATA";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad magic 0x{got:08x}, expected 0x{expected:08x}")]
    BadMagic { path: PathBuf, expected: u32, got: u32 },
    #[error("{path}: truncated, need {expected} bytes, have {got}")]
    Truncated { path: PathBuf, expected: usize, got: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is not below {classes}")]
    LabelRange { index: usize, label: usize, classes: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images as a `features × samples` matrix with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Mat,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(images: Mat, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self, DataError> {
        if images.cols() != labels.len() {
            return Err(DataError::CountMismatch { images: images.cols(), labels: labels.len() });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(DataError::LabelRange { index, label, classes });
        }
        if !images.is_finite() {
            return Err(DataError::Invalid("non-finite pixel".into()));
        }
        Ok(Dataset { images, labels, classes, split })
    }

    pub fn images(&self) -> &Mat {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.images.rows()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` samples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_cols(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
        }
    }

    /// `classes × indices.len()` one-hot targets.
    pub fn one_hot(&self, indices: &[usize]) -> Mat {
        let mut y = Mat::zeros(self.classes, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            y[(self.labels[i], j)] = 1.0;
        }
        y
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or(DataError::Truncated {
        path: path.to_path_buf(),
        expected: at + 4,
        got: bytes.len(),
    })
}

/// Parses an IDX image file body: returns `(count, features, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic { path: path.to_path_buf(), expected: IDX_IMAGES_MAGIC, got: magic });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let h = be_u32(bytes, 8, path)? as usize;
    let w = be_u32(bytes, 12, path)? as usize;
    let need = 16 + n * h * w;
    if bytes.len() < need {
        return Err(DataError::Truncated { path: path.to_path_buf(), expected: need, got: bytes.len() });
    }
    Ok((n, h * w, bytes[16..need].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic { path: path.to_path_buf(), expected: IDX_LABELS_MAGIC, got: magic });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(DataError::Truncated { path: path.to_path_buf(), expected: need, got: bytes.len() });
    }
    Ok(bytes[8..need].to_vec())
}

/// Loads an image/label IDX pair (raw or gzip-compressed). Pixels are scaled
/// by 1/255; the class count is 10 or one more than the largest label.
pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset, DataError> {
    let (n, features, pixels) = parse_idx_images(&read_maybe_gz(images)?, images)?;
    let lab = parse_idx_labels(&read_maybe_gz(labels)?, labels)?;
    if lab.len() != n {
        return Err(DataError::CountMismatch { images: n, labels: lab.len() });
    }
    let mut m = Mat::zeros(features, n);
    for s in 0..n {
        for f in 0..features {
            m[(f, s)] = pixels[s * features + f] as f64 / 255.0;
        }
    }
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    Dataset::new(m, labels, classes, split)
}

/// Writes `ds` as an IDX pair. Pixels are rounded to the nearest multiple of
/// 1/255; square feature counts are written as `side × side` images.
pub fn write_idx(ds: &Dataset, images: &Path, labels: &Path, gzip: bool) -> Result<(), DataError> {
    let f = ds.features();
    let side = (f as f64).sqrt().round() as usize;
    let (h, w) = if side * side == f { (side, side) } else { (1, f) };
    let mut img = Vec::with_capacity(16 + ds.len() * f);
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, h as u32, w as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for s in 0..ds.len() {
        for r in 0..f {
            img.push((ds.images[(r, s)].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABELS_MAGIC, ds.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    for &l in &ds.labels {
        let b = u8::try_from(l).map_err(|_| DataError::Invalid(format!("label {l} does not fit a byte")))?;
        lab.push(b);
    }
    write_bytes(images, &img, gzip)?;
    write_bytes(labels, &lab, gzip)
}

fn write_bytes(path: &Path, bytes: &[u8], gzip: bool) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(io)?;
        fs::write(path, enc.finish().map_err(io)?).map_err(io)
    } else {
        fs::write(path, bytes).map_err(io)
    }
}

/// Standard MNIST file names inside `dir` (gzip suffix optional).
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset), DataError> {
    let pick = |stem: &str| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    let train = load_idx(&pick("train-images-idx3-ubyte"), &pick("train-labels-idx1-ubyte"), Split::Train)?;
    let test = load_idx(&pick("t10k-images-idx3-ubyte"), &pick("t10k-labels-idx1-ubyte"), Split::Test)?;
    Ok((train, test))
}

/// Directory of the bundled 5000-image MNIST subset (4000 train, 1000 test).
pub fn bundled_mnist5k_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("mnist5k")
}

pub fn load_bundled_mnist5k() -> Result<(Dataset, Dataset), DataError> {
    load_mnist_dir(&bundled_mnist5k_dir())
}

/// Default dataset root: `$CIMTRAIN_DATA`, else the bundled subset.
pub fn default_data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(bundled_mnist5k_dir)
}

/// Gaussian-blob classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub features: usize,
    pub samples_per_class: usize,
    pub std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes == 0 || self.features == 0 || self.samples_per_class == 0 {
            return Err(DataError::Invalid("classes, features and samples_per_class must be positive".into()));
        }
        if !(self.std >= 0.0 && self.std.is_finite()) {
            return Err(DataError::Invalid(format!("std must be non-negative, got {}", self.std)));
        }
        Ok(())
    }
}

/// One center per class drawn uniformly from the unit cube (the centers span
/// a random simplex); samples add isotropic noise and are clipped to `[0, 1]`.
/// Samples are interleaved by class: column `s` has label `s % classes`.
pub fn synthetic(spec: &SyntheticSpec, split: Split) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = Rng::derive(spec.seed, streams::SYNTHETIC);
    let centers = Mat::from_fn(spec.features, spec.classes, |_, _| rng.uniform());
    let stream = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    let mut noise = Rng::derive(spec.seed ^ 0x5eed_0000_0000_0000, streams::SYNTHETIC + stream);
    let n = spec.classes * spec.samples_per_class;
    let labels: Vec<usize> = (0..n).map(|s| s % spec.classes).collect();
    let mut images = Mat::zeros(spec.features, n);
    for (s, &c) in labels.iter().enumerate() {
        for f in 0..spec.features {
            images[(f, s)] = (centers[(f, c)] + spec.std * noise.normal()).clamp(0.0, 1.0);
        }
    }
    Dataset::new(images, labels, spec.classes, split)
}

/// Index batches of one epoch: a Fisher–Yates shuffle of `0..n` cut into
/// chunks of `batch_size`; the last batch may be short.
pub fn batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Sequential, unshuffled index batches (evaluation order).
pub fn sequential_batches(n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
