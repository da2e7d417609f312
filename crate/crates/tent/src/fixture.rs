//! Seeded fixture models.
//!
//! Weights are normally distributed and then rescaled so every weighted layer
//! hits a fixed max-abs value. The targets mimic the ranges of small MNIST-class
//! convnets, including a layer under 0.5 and one above 2. The last layer's bias
//! is centred on synthetic data so the ten classes are all in use.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tent_core::nn::{BatchNorm, Conv2d, ConvGeometry, Dense, Layer, Model, Pool, Tensor};

use crate::dataset::{synth_dataset, synth_inputs, DEFAULT_SYNTH_SAMPLES};
use crate::error::{Error, Result};
use crate::manifest::save_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// 2 conv, 1 pool, 2 dense.
    TinyConvnet,
    /// 3 conv, 2 pool, 1 batchnorm, 2 dense.
    Fashion,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::TinyConvnet => "tiny-convnet",
            Variant::Fashion => "fashion-convnet",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny-convnet" => Ok(Variant::TinyConvnet),
            "fashion-convnet" | "fashion" => Ok(Variant::Fashion),
            _ => Err(Error::Argument(format!("unknown fixture `{s}`"))),
        }
    }
}

/// What `tent fixture` records next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureInfo {
    pub variant: Variant,
    pub seed: u64,
    /// Synthetic dataset the float accuracy was measured on.
    pub dataset: String,
    pub samples: usize,
    pub float_top1: f64,
}

pub const INPUT_SHAPE: [usize; 3] = [1, 16, 16];

struct Gen {
    rng: ChaCha8Rng,
    normal: Normal<f32>,
}

impl Gen {
    fn tensor(&mut self, shape: Vec<usize>, amax: f32) -> Tensor {
        let n: usize = shape.iter().product();
        let mut v: Vec<f32> = (0..n).map(|_| self.normal.sample(&mut self.rng)).collect();
        let m = v.iter().fold(0.0f32, |m, x| m.max(x.abs()));
        v.iter_mut().for_each(|x| *x *= amax / m);
        Tensor::new(shape, v).unwrap()
    }

    fn bias(&mut self, n: usize, scale: f32) -> Vec<f32> {
        (0..n).map(|_| self.normal.sample(&mut self.rng) * scale).collect()
    }

    /// Normal bulk with standard deviation `std`, plus one outlier of magnitude `amax`.
    fn tensor_with_outlier(&mut self, shape: Vec<usize>, std: f32, amax: f32) -> Tensor {
        let n: usize = shape.iter().product();
        let mut v: Vec<f32> = (0..n).map(|_| self.normal.sample(&mut self.rng) * std).collect();
        let (i, _) = v.iter().enumerate().fold((0, 0.0f32), |b, (i, x)| if x.abs() > b.1 { (i, x.abs()) } else { b });
        let m = v[i].abs();
        if m > amax {
            v.iter_mut().for_each(|x| *x *= amax / m);
        } else {
            v[i] = amax.copysign(v[i]);
        }
        Tensor::new(shape, v).unwrap()
    }

    fn conv(&mut self, cin: usize, cout: usize, padding: usize, amax: f32) -> Layer {
        let geometry = ConvGeometry {
            in_channels: cin,
            out_channels: cout,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding,
        };
        Layer::Conv2d(Conv2d {
            geometry,
            weight: self.tensor(geometry.weight_shape(), amax),
            bias: self.bias(cout, 0.05),
        })
    }

    fn conv_outlier(&mut self, cin: usize, cout: usize, padding: usize, std: f32, amax: f32) -> Layer {
        let geometry = ConvGeometry {
            in_channels: cin,
            out_channels: cout,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding,
        };
        Layer::Conv2d(Conv2d {
            geometry,
            weight: self.tensor_with_outlier(geometry.weight_shape(), std, amax),
            bias: self.bias(cout, 0.05),
        })
    }

    fn dense(&mut self, fin: usize, fout: usize, amax: f32) -> Layer {
        Layer::Dense(Dense {
            in_features: fin,
            out_features: fout,
            weight: self.tensor(vec![fout, fin], amax),
            bias: self.bias(fout, 0.05),
        })
    }
}

fn layers(variant: Variant, g: &mut Gen) -> Vec<Layer> {
    let pool = Layer::MaxPool(Pool { kernel: 2, stride: 2 });
    match variant {
        Variant::TinyConvnet => vec![
            g.conv_outlier(1, 4, 0, 0.3, 2.12),
            Layer::Relu,
            pool,
            g.conv(4, 8, 0, 0.62),
            Layer::Relu,
            Layer::Flatten,
            g.dense(200, 32, 0.45),
            Layer::Relu,
            g.dense(32, 10, 0.78),
        ],
        Variant::Fashion => vec![
            g.conv_outlier(1, 4, 1, 0.3, 2.12),
            Layer::BatchNorm(BatchNorm {
                mean: g.bias(4, 0.1),
                var: (0..4).map(|i| 0.6 + 0.1 * i as f32).collect(),
                gamma: (0..4).map(|i| 0.9 + 0.05 * i as f32).collect(),
                beta: g.bias(4, 0.05),
                eps: 1e-5,
            }),
            Layer::Relu,
            pool.clone(),
            g.conv(4, 8, 0, 0.45),
            Layer::Relu,
            g.conv(8, 8, 1, 0.6),
            Layer::Relu,
            pool,
            Layer::Flatten,
            g.dense(72, 32, 0.3),
            Layer::Relu,
            g.dense(32, 10, 0.74),
        ],
    }
}

/// Builds the fixture model for `seed`. Weight generation and bias centring
/// use independent streams derived from the seed.
pub fn build(variant: Variant, seed: u64) -> Model {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        normal: Normal::new(0.0, 1.0).unwrap(),
    };
    let mut layers = layers(variant, &mut g);
    let draft = Model::new(variant.name(), INPUT_SHAPE.to_vec(), layers.clone()).expect("fixture shapes");
    let probe = synth_inputs(seed ^ 0x9E37_79B9_7F4A_7C15, 256, &INPUT_SHAPE);
    let mut mean = vec![0.0f64; 10];
    for i in 0..probe.batch_len() {
        let logits = draft.forward(probe.sample(i)).expect("fixture forward");
        for (m, l) in mean.iter_mut().zip(logits) {
            *m += l as f64 / probe.batch_len() as f64;
        }
    }
    if let Some(Layer::Dense(d)) = layers.last_mut() {
        for (b, m) in d.bias.iter_mut().zip(&mean) {
            *b -= *m as f32;
        }
    }
    Model::new(variant.name(), INPUT_SHAPE.to_vec(), layers).expect("fixture shapes")
}

/// Writes the fixture manifest and blobs into `dir`; returns the manifest path.
pub fn write(variant: Variant, seed: u64, dir: &Path) -> Result<PathBuf> {
    let model = build(variant, seed);
    let data = synth_dataset(seed, DEFAULT_SYNTH_SAMPLES, &model)?;
    let report = tent_core::nn::evaluate(&model, &data)?;
    let info = FixtureInfo {
        variant,
        seed,
        dataset: format!("synth:{seed}"),
        samples: data.len(),
        float_top1: report.top1_accuracy,
    };
    let meta = serde_json::to_value(&info).expect("fixture info serializes");
    save_model(&model, dir, variant.name(), Some(meta))
}

pub fn info(metadata: Option<&serde_json::Value>) -> Option<FixtureInfo> {
    metadata.and_then(|m| serde_json::from_value(m.clone()).ok())
}
