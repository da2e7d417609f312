//! Labelled datasets: MNIST-style IDX files, CIFAR-10 binary batches and a
//! seeded synthetic generator.
//!
//! Pixels are scaled to `[0, 1]`. Synthetic inputs are smooth random blobs
//! squashed into `[0, 1)` plus a little noise; their labels are the float teacher model's argmax.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tent_core::nn::{predict, Classifier, Dataset, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    Idx(PathBuf),
    Cifar10(PathBuf),
    Synth(u64),
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("dataset `{s}`: expected idx:<dir>, cifar10:<dir> or synth:<seed>"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "idx" if !arg.is_empty() => Ok(DatasetSpec::Idx(arg.into())),
            "cifar10" if !arg.is_empty() => Ok(DatasetSpec::Cifar10(arg.into())),
            "synth" => arg.parse().map(DatasetSpec::Synth).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSpec::Idx(p) => write!(f, "idx:{}", p.display()),
            DatasetSpec::Cifar10(p) => write!(f, "cifar10:{}", p.display()),
            DatasetSpec::Synth(s) => write!(f, "synth:{s}"),
        }
    }
}

/// Loads at most `limit` samples. `teacher` labels synthetic data.
pub fn load(spec: &DatasetSpec, limit: Option<usize>, teacher: Option<&dyn Classifier>) -> Result<Dataset> {
    let data = match spec {
        DatasetSpec::Idx(dir) => load_idx_dir(dir)?,
        DatasetSpec::Cifar10(dir) => load_cifar10_dir(dir)?,
        DatasetSpec::Synth(seed) => {
            let teacher = teacher.ok_or_else(|| Error::Argument("synthetic data needs a float teacher model".into()))?;
            return synth_dataset(*seed, limit.unwrap_or(DEFAULT_SYNTH_SAMPLES), teacher);
        }
    };
    Ok(match limit {
        Some(n) => data.take(n),
        None => data,
    })
}

pub const DEFAULT_SYNTH_SAMPLES: usize = 1000;

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// A parsed IDX file: dimensions and values widened to f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Idx {
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
    /// True for unsigned-byte payloads.
    pub ubyte: bool,
}

pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<Idx> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(malformed(path, "bad IDX magic"));
    }
    let (ty, ndim) = (bytes[2], bytes[3] as usize);
    let header = 4 + 4 * ndim;
    if ndim == 0 || bytes.len() < header {
        return Err(malformed(path, "truncated IDX header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let body = &bytes[header..];
    let width = match ty {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        _ => return Err(malformed(path, format!("unsupported IDX element type {ty:#04x}"))),
    };
    if body.len() != count * width {
        return Err(malformed(path, format!("expected {} payload bytes, found {}", count * width, body.len())));
    }
    let values = match ty {
        0x08 => body.iter().map(|&b| b as f32).collect(),
        0x09 => body.iter().map(|&b| b as i8 as f32).collect(),
        0x0B => body.chunks_exact(2).map(|c| i16::from_be_bytes([c[0], c[1]]) as f32).collect(),
        0x0C => body.chunks_exact(4).map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f32).collect(),
        0x0D => body.chunks_exact(4).map(|c| f32::from_be_bytes(c.try_into().unwrap())).collect(),
        _ => body.chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().unwrap()) as f32).collect(),
    };
    Ok(Idx {
        dims,
        values,
        ubyte: ty == 0x08,
    })
}

fn find_file(dir: &Path, candidates: &[String]) -> Option<PathBuf> {
    candidates.iter().map(|c| dir.join(c)).find(|p| p.is_file())
}

/// Loads `t10k-*`, `test-*` or `train-*` image/label pairs, preferring test data.
pub fn load_idx_dir(dir: &Path) -> Result<Dataset> {
    for prefix in ["t10k", "test", "train"] {
        let names = |what: &str, rank: u8| {
            vec![
                format!("{prefix}-{what}-idx{rank}-ubyte"),
                format!("{prefix}-{what}.idx{rank}-ubyte"),
            ]
        };
        let (Some(images), Some(labels)) = (find_file(dir, &names("images", 3)), find_file(dir, &names("labels", 1)))
        else {
            continue;
        };
        return load_idx_pair(&images, &labels);
    }
    Err(malformed(dir, "no uncompressed IDX image/label pair found"))
}

pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = parse_idx(&fs::read(images).map_err(Error::io(images))?, images)?;
    let lab = parse_idx(&fs::read(labels).map_err(Error::io(labels))?, labels)?;
    let shape = match img.dims.as_slice() {
        [n, h, w] => vec![*n, 1, *h, *w],
        [n, c, h, w] => vec![*n, *c, *h, *w],
        _ => return Err(malformed(images, "images must have 3 or 4 dimensions")),
    };
    if lab.dims.len() != 1 {
        return Err(malformed(labels, "labels must be one-dimensional"));
    }
    let scale = if img.ubyte { 1.0 / 255.0 } else { 1.0 };
    let pixels = img.values.into_iter().map(|v| v * scale).collect();
    let labels = lab
        .values
        .into_iter()
        .map(|v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as u32) } else { Err(malformed(labels, "non-integer label")) })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(Tensor::new(shape, pixels)?, labels)?)
}

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

pub fn parse_cifar10(bytes: &[u8], path: &Path) -> Result<(Vec<f32>, Vec<u32>)> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(malformed(path, format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len())));
    }
    let mut pixels = Vec::with_capacity(bytes.len());
    let mut labels = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(rec[0] as u32);
        pixels.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok((pixels, labels))
}

/// Loads `test_batch.bin`, or every `data_batch_*.bin` in order if absent.
pub fn load_cifar10_dir(dir: &Path) -> Result<Dataset> {
    let test = dir.join("test_batch.bin");
    let files = if test.is_file() {
        vec![test]
    } else {
        let mut v: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).filter(|p| p.is_file()).collect();
        if v.is_empty() {
            return Err(malformed(dir, "no CIFAR-10 binary batches found"));
        }
        v.sort();
        v
    };
    let (mut pixels, mut labels) = (Vec::new(), Vec::new());
    for f in files {
        let (p, l) = parse_cifar10(&fs::read(&f).map_err(Error::io(&f))?, &f)?;
        pixels.extend(p);
        labels.extend(l);
    }
    let n = labels.len();
    Ok(Dataset::new(Tensor::new(vec![n, 3, 32, 32], pixels)?, labels)?)
}

/// Seeded inputs of the given per-sample shape (`[C, H, W]` or flat).
pub fn synth_inputs(seed: u64, count: usize, sample_shape: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, 0.05).unwrap();
    let (c, h, w) = match sample_shape {
        [c, h, w] => (*c, *h, *w),
        other => (1, 1, other.iter().product()),
    };
    let mut data = Vec::with_capacity(count * c * h * w);
    for _ in 0..count {
        let blobs: Vec<(f32, f32, f32, f32)> = (0..3)
            .map(|_| {
                let cy = rng.random::<f32>() * h as f32;
                let cx = rng.random::<f32>() * w as f32;
                let sigma = 1.0 + rng.random::<f32>() * (h.max(w) as f32 / 4.0);
                (cy, cx, sigma, 0.5 + rng.random::<f32>())
            })
            .collect();
        for _ in 0..c {
            let gain = 0.75 + 0.5 * rng.random::<f32>();
            for y in 0..h {
                for x in 0..w {
                    let v: f32 = blobs
                        .iter()
                        .map(|&(cy, cx, s, a)| {
                            let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                            a * (-d2 / (2.0 * s * s)).exp()
                        })
                        .sum();
                    data.push(1.0 - (-gain * v).exp() + noise.sample(&mut rng));
                }
            }
        }
    }
    let mut shape = vec![count];
    shape.extend_from_slice(sample_shape);
    Tensor::new(shape, data).expect("shape matches generated length")
}

pub fn synth_dataset(seed: u64, count: usize, teacher: &dyn Classifier) -> Result<Dataset> {
    let inputs = synth_inputs(seed, count, teacher.input_shape());
    let labels = predict(teacher, &inputs)?.into_iter().map(|p| p as u32).collect();
    Ok(Dataset::new(inputs, labels)?)
}
