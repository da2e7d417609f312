//! Float model manifests.
//!
//! A manifest is a JSON document listing the layers in order. Every tensor
//! lives in its own raw little-endian f32 file next to the manifest, row-major
//! (OIHW for convolution weights), with its shape and sha256 recorded inline:
//!
//! ```json
//! { "format": "tent-model", "version": 1, "name": "tiny-convnet",
//!   "input_shape": [1, 16, 16],
//!   "layers": [
//!     { "kind": "conv2d", "in_channels": 1, "out_channels": 4, "kernel": [3, 3],
//!       "stride": 1, "padding": 0,
//!       "weight": { "file": "00-conv2d.weight.f32", "shape": [4, 1, 3, 3], "sha256": "..." },
//!       "bias": { "file": "00-conv2d.bias.f32", "shape": [4], "sha256": "..." } },
//!     { "kind": "relu" } ] }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tent_core::nn::{BatchNorm, Conv2d, ConvGeometry, Dense, Layer, Model, Pool, Tensor};

use crate::blob::{f32_from_le, f32_to_le, read_blob, read_json, write_blob, write_json, BlobRef};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "tent-model";
pub const VERSION: u32 = 1;

const KINDS: &[&str] = &[
    "conv2d",
    "dense",
    "relu",
    "maxpool",
    "avgpool",
    "batchnorm",
    "residual_add",
    "flatten",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRef {
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weight: TensorRef,
        bias: TensorRef,
    },
    Dense {
        in_features: usize,
        out_features: usize,
        weight: TensorRef,
        bias: TensorRef,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool { kernel: usize, stride: usize },
    #[serde(rename = "avgpool")]
    AvgPool { kernel: usize, stride: usize },
    #[serde(rename = "batchnorm")]
    BatchNorm {
        eps: f32,
        mean: TensorRef,
        var: TensorRef,
        gamma: TensorRef,
        beta: TensorRef,
    },
    ResidualAdd { source: usize },
    Flatten,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestDoc {
    format: String,
    version: u32,
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<Value>,
}

/// A model together with the free-form metadata stored in its manifest.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: Model,
    pub metadata: Option<Value>,
    pub path: PathBuf,
}

pub fn load_model(path: &Path) -> Result<Model> {
    load_model_file(path).map(|f| f.model)
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    let doc: ManifestDoc = read_json(path)?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::Manifest(format!("expected format `{MODEL_FORMAT}`, found `{}`", doc.format)));
    }
    if doc.version != VERSION {
        return Err(Error::Manifest(format!("unsupported version {}", doc.version)));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut layers = Vec::with_capacity(doc.layers.len());
    for value in doc.layers {
        let kind = value
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Manifest("layer without a `kind`".into()))?;
        if !KINDS.contains(&kind) {
            return Err(Error::UnknownLayerKind(kind.to_string()));
        }
        let entry: LayerEntry = serde_json::from_value(value).map_err(Error::json(path))?;
        layers.push(entry_to_layer(dir, entry)?);
    }
    let model = Model::new(doc.name, doc.input_shape, layers)?;
    Ok(ModelFile {
        model,
        metadata: doc.metadata,
        path: path.to_path_buf(),
    })
}

fn read_tensor(dir: &Path, r: &TensorRef) -> Result<Tensor> {
    let bytes = read_blob(
        dir,
        &BlobRef {
            file: r.file.clone(),
            sha256: r.sha256.clone(),
        },
    )?;
    let expected: usize = r.shape.iter().product();
    let data = f32_from_le(&bytes).filter(|d| d.len() == expected).ok_or_else(|| Error::ShapeMismatch {
        tensor: r.file.clone(),
        expected,
        found: bytes.len() / 4,
    })?;
    Ok(Tensor::new(r.shape.clone(), data)?)
}

fn read_vector(dir: &Path, r: &TensorRef) -> Result<Vec<f32>> {
    let t = read_tensor(dir, r)?;
    if t.shape().len() != 1 {
        return Err(Error::Manifest(format!("{} must be one-dimensional", r.file)));
    }
    Ok(t.into_data())
}

fn entry_to_layer(dir: &Path, entry: LayerEntry) -> Result<Layer> {
    Ok(match entry {
        LayerEntry::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias,
        } => Layer::Conv2d(Conv2d {
            geometry: ConvGeometry {
                in_channels,
                out_channels,
                kernel_h: kernel[0],
                kernel_w: kernel[1],
                stride,
                padding,
            },
            weight: read_tensor(dir, &weight)?,
            bias: read_vector(dir, &bias)?,
        }),
        LayerEntry::Dense {
            in_features,
            out_features,
            weight,
            bias,
        } => Layer::Dense(Dense {
            in_features,
            out_features,
            weight: read_tensor(dir, &weight)?,
            bias: read_vector(dir, &bias)?,
        }),
        LayerEntry::Relu => Layer::Relu,
        LayerEntry::MaxPool { kernel, stride } => Layer::MaxPool(Pool { kernel, stride }),
        LayerEntry::AvgPool { kernel, stride } => Layer::AvgPool(Pool { kernel, stride }),
        LayerEntry::BatchNorm {
            eps,
            mean,
            var,
            gamma,
            beta,
        } => Layer::BatchNorm(BatchNorm {
            mean: read_vector(dir, &mean)?,
            var: read_vector(dir, &var)?,
            gamma: read_vector(dir, &gamma)?,
            beta: read_vector(dir, &beta)?,
            eps,
        }),
        LayerEntry::ResidualAdd { source } => Layer::ResidualAdd { source },
        LayerEntry::Flatten => Layer::Flatten,
    })
}

fn write_tensor(dir: &Path, file: String, shape: &[usize], data: &[f32]) -> Result<TensorRef> {
    let blob = write_blob(dir, &file, &f32_to_le(data))?;
    Ok(TensorRef {
        file,
        shape: shape.to_vec(),
        sha256: blob.sha256,
    })
}

/// Writes `<dir>/<stem>.json` plus one blob per tensor. Returns the manifest path.
pub fn save_model(model: &Model, dir: &Path, stem: &str, metadata: Option<Value>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut layers = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let name = |t: &str| format!("{stem}.{i:02}-{}.{t}.f32", layer.kind().name());
        let entry = match layer {
            Layer::Conv2d(c) => LayerEntry::Conv2d {
                in_channels: c.geometry.in_channels,
                out_channels: c.geometry.out_channels,
                kernel: [c.geometry.kernel_h, c.geometry.kernel_w],
                stride: c.geometry.stride,
                padding: c.geometry.padding,
                weight: write_tensor(dir, name("weight"), c.weight.shape(), c.weight.data())?,
                bias: write_tensor(dir, name("bias"), &[c.bias.len()], &c.bias)?,
            },
            Layer::Dense(d) => LayerEntry::Dense {
                in_features: d.in_features,
                out_features: d.out_features,
                weight: write_tensor(dir, name("weight"), d.weight.shape(), d.weight.data())?,
                bias: write_tensor(dir, name("bias"), &[d.bias.len()], &d.bias)?,
            },
            Layer::Relu => LayerEntry::Relu,
            Layer::MaxPool(p) => LayerEntry::MaxPool {
                kernel: p.kernel,
                stride: p.stride,
            },
            Layer::AvgPool(p) => LayerEntry::AvgPool {
                kernel: p.kernel,
                stride: p.stride,
            },
            Layer::BatchNorm(b) => {
                let c = b.mean.len();
                LayerEntry::BatchNorm {
                    eps: b.eps,
                    mean: write_tensor(dir, name("mean"), &[c], &b.mean)?,
                    var: write_tensor(dir, name("var"), &[c], &b.var)?,
                    gamma: write_tensor(dir, name("gamma"), &[c], &b.gamma)?,
                    beta: write_tensor(dir, name("beta"), &[c], &b.beta)?,
                }
            }
            Layer::ResidualAdd { source } => LayerEntry::ResidualAdd { source: *source },
            Layer::Flatten => LayerEntry::Flatten,
        };
        layers.push(serde_json::to_value(entry).expect("layer entries serialize"));
    }
    let doc = ManifestDoc {
        format: MODEL_FORMAT.into(),
        version: VERSION,
        name: model.name().into(),
        input_shape: model.input_shape().to_vec(),
        layers,
        metadata,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &doc)?;
    Ok(path)
}
