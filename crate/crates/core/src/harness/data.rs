//! CIFAR-10 binary batches.
//!
//! Each record is one label byte followed by 3072 pixel bytes: the 32x32
//! red plane, then green, then blue, all row-major.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
pub const RECORD_BYTES: usize = 1 + PIXELS;
pub const CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

/// Images stored as `[N, 3, 32, 32]` floats plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn truncate(&mut self, n: usize) {
        self.labels.truncate(n);
        self.images.truncate(n * PIXELS);
    }

    /// Stacks the listed images into `[len, 3, 32, 32]`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i] as usize).collect();
        let t = Tensor::from_vec(&[indices.len(), CHANNELS, IMAGE_SIDE, IMAGE_SIDE], data)
            .expect("batch shape");
        (t, labels)
    }
}

/// Parses an in-memory batch file; `path` is used in error messages only.
pub fn parse_batch(path: &Path, bytes: &[u8], limit: Option<usize>) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_BYTES) {
        let records = bytes.len().div_ceil(RECORD_BYTES).max(1);
        return Err(Error::Data {
            path: path.to_path_buf(),
            detail: format!(
                "length {} is not a positive multiple of {RECORD_BYTES} bytes per record \
                 (expected {} bytes for {records} records)",
                bytes.len(),
                records * RECORD_BYTES
            ),
        });
    }
    let total = bytes.len() / RECORD_BYTES;
    let n = limit.map_or(total, |l| l.min(total));
    let mut images = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for record in bytes.chunks_exact(RECORD_BYTES).take(n) {
        let label = record[0];
        if label as usize >= CLASSES {
            return Err(Error::Data {
                path: path.to_path_buf(),
                detail: format!("label {label} out of range 0..{CLASSES}"),
            });
        }
        labels.push(label);
        images.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok(Dataset { images, labels })
}

pub fn read_batch(path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    parse_batch(path, &bytes, limit)
}

fn read_files(dir: &Path, files: &[&str], limit: Option<usize>) -> Result<Dataset> {
    let mut out = Dataset {
        images: Vec::new(),
        labels: Vec::new(),
    };
    for file in files {
        let remaining = limit.map(|l| l - out.len());
        if remaining == Some(0) {
            break;
        }
        let part = read_batch(&dir.join(file), remaining)?;
        out.images.extend(part.images);
        out.labels.extend(part.labels);
    }
    Ok(out)
}

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: [f32; CHANNELS],
    pub std: [f32; CHANNELS],
}

impl Normalization {
    /// Population statistics of `data`, accumulated in f64.
    pub fn fit(data: &Dataset) -> Self {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        let mut mean = [0f32; CHANNELS];
        let mut std = [1f32; CHANNELS];
        let count = (data.len() * plane) as f64;
        if count == 0.0 {
            return Normalization { mean, std };
        }
        for c in 0..CHANNELS {
            let channel = || {
                (0..data.len()).flat_map(move |i| {
                    data.image(i)[c * plane..(c + 1) * plane].iter().map(|&v| v as f64)
                })
            };
            let m = channel().sum::<f64>() / count;
            let var = channel().map(|v| (v - m) * (v - m)).sum::<f64>() / count;
            mean[c] = m as f32;
            std[c] = if var > 0.0 { var.sqrt() as f32 } else { 1.0 };
        }
        Normalization { mean, std }
    }

    pub fn apply(&self, data: &mut Dataset) {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        for img in data.images.chunks_exact_mut(PIXELS) {
            for c in 0..CHANNELS {
                for v in &mut img[c * plane..(c + 1) * plane] {
                    *v = (*v - self.mean[c]) / self.std[c];
                }
            }
        }
    }
}

/// Train and test splits, normalized with statistics of the loaded train split.
#[derive(Clone, Debug)]
pub struct Cifar {
    pub train: Dataset,
    pub test: Dataset,
    pub norm: Normalization,
}

/// Loads the first `train_subset` training and `test_subset` test records
/// (all of them when `None`).
pub fn load_cifar(
    dir: &Path,
    train_subset: Option<usize>,
    test_subset: Option<usize>,
) -> Result<Cifar> {
    if !dir.is_dir() {
        return Err(Error::Data {
            path: dir.to_path_buf(),
            detail: "not a directory".into(),
        });
    }
    let mut train = read_files(dir, &TRAIN_FILES, train_subset)?;
    let mut test = read_files(dir, &[TEST_FILE], test_subset)?;
    let norm = Normalization::fit(&train);
    norm.apply(&mut train);
    norm.apply(&mut test);
    Ok(Cifar { train, test, norm })
}

/// Test split only, normalized with statistics saved alongside a model.
pub fn load_test(dir: &Path, subset: Option<usize>, norm: &Normalization) -> Result<Dataset> {
    let mut test = read_files(dir, &[TEST_FILE], subset)?;
    norm.apply(&mut test);
    Ok(test)
}

/// `$SRP_CIFAR_DIR`, falling back to `/root/data/cifar-10-batches-bin`.
pub fn default_cifar_dir() -> PathBuf {
    std::env::var_os("SRP_CIFAR_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/cifar-10-batches-bin"))
}
