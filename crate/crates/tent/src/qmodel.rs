//! Quantized model export.
//!
//! Same layout idea as the float manifest, with one format descriptor per
//! layer output and per weight tensor. Weight codes are densely bit-packed
//! (see [`crate::bitpack`]); biases are little-endian i64 integers at
//! `frac_places` fractional bits, exactly as the quire consumes them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tent_core::nn::{ConvGeometry, FormatPolicy, LayerAssignment, Pool, QuantOp, QuantizedLayer, QuantizedModel};
use tent_core::Format;

use crate::bitpack;
use crate::blob::{i64_from_le, i64_to_le, read_blob, read_json, sha256_hex, write_blob, write_json, BlobRef};
use crate::error::{Error, Result};

pub const QUANTIZED_FORMAT: &str = "tent-quantized";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesRef {
    pub file: String,
    pub count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRef {
    pub file: String,
    pub count: usize,
    pub frac_places: u32,
    pub sha256: String,
}

/// The float model a quantized model was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub manifest: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum OpEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weight_format: Format,
        weights: CodesRef,
        bias: BiasRef,
    },
    Dense {
        in_features: usize,
        out_features: usize,
        weight_format: Format,
        weights: CodesRef,
        bias: BiasRef,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool { kernel: usize, stride: usize },
    #[serde(rename = "avgpool")]
    AvgPool { kernel: usize, stride: usize },
    ResidualAdd { source: usize },
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    #[serde(flatten)]
    op: OpEntry,
    output_format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    assignment: Option<LayerAssignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_mse: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuantizedDoc {
    format: String,
    version: u32,
    name: String,
    input_shape: Vec<usize>,
    bits: u32,
    policy: String,
    input_format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceRef>,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Clone)]
pub struct QuantizedFile {
    pub model: QuantizedModel,
    pub source: Option<SourceRef>,
    pub path: PathBuf,
}

fn bias_to_i64(layer: usize, bias: &[i128]) -> Result<Vec<i64>> {
    bias.iter()
        .map(|&b| {
            i64::try_from(b).map_err(|_| Error::Manifest(format!("layer {layer}: aligned bias {b} does not fit in 64 bits")))
        })
        .collect()
}

/// Writes `<dir>/<stem>.json` with packed codes and aligned biases.
pub fn save_quantized(model: &QuantizedModel, dir: &Path, stem: &str, source: Option<SourceRef>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut layers = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let name = |t: &str| format!("{stem}.{i:02}-{}.{t}", layer.op.kind().name());
        let weighted = |fw: Format, codes: &[tent_core::Code], bias: &[i128], places: u32| -> Result<(CodesRef, BiasRef)> {
            let w = write_blob(dir, &name("codes"), &bitpack::pack(codes, fw.bits()))?;
            let b = write_blob(dir, &name("bias.i64"), &i64_to_le(&bias_to_i64(i, bias)?))?;
            Ok((
                CodesRef {
                    file: w.file,
                    count: codes.len(),
                    sha256: w.sha256,
                },
                BiasRef {
                    file: b.file,
                    count: bias.len(),
                    frac_places: places,
                    sha256: b.sha256,
                },
            ))
        };
        let op = match &layer.op {
            QuantOp::Conv2d {
                geometry: g,
                weight_format,
                weights,
                bias,
                bias_frac_places,
            } => {
                let (weights, bias) = weighted(*weight_format, weights, bias, *bias_frac_places)?;
                OpEntry::Conv2d {
                    in_channels: g.in_channels,
                    out_channels: g.out_channels,
                    kernel: [g.kernel_h, g.kernel_w],
                    stride: g.stride,
                    padding: g.padding,
                    weight_format: *weight_format,
                    weights,
                    bias,
                }
            }
            QuantOp::Dense {
                in_features,
                out_features,
                weight_format,
                weights,
                bias,
                bias_frac_places,
            } => {
                let (weights, bias) = weighted(*weight_format, weights, bias, *bias_frac_places)?;
                OpEntry::Dense {
                    in_features: *in_features,
                    out_features: *out_features,
                    weight_format: *weight_format,
                    weights,
                    bias,
                }
            }
            QuantOp::Relu => OpEntry::Relu,
            QuantOp::MaxPool(p) => OpEntry::MaxPool {
                kernel: p.kernel,
                stride: p.stride,
            },
            QuantOp::AvgPool(p) => OpEntry::AvgPool {
                kernel: p.kernel,
                stride: p.stride,
            },
            QuantOp::ResidualAdd { source } => OpEntry::ResidualAdd { source: *source },
            QuantOp::Flatten => OpEntry::Flatten,
        };
        layers.push(LayerDoc {
            op,
            output_format: layer.output_format,
            assignment: layer.assignment,
            weight_mse: layer.weight_mse,
        });
    }
    let doc = QuantizedDoc {
        format: QUANTIZED_FORMAT.into(),
        version: VERSION,
        name: model.name().into(),
        input_shape: model.input_shape().to_vec(),
        bits: model.bits(),
        policy: model.policy().to_string(),
        input_format: model.input_format(),
        source,
        layers,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &doc)?;
    Ok(path)
}

fn read_codes(dir: &Path, r: &CodesRef, format: Format, expected: usize) -> Result<Vec<tent_core::Code>> {
    if r.count != expected {
        return Err(Error::ShapeMismatch {
            tensor: r.file.clone(),
            expected,
            found: r.count,
        });
    }
    let bytes = read_blob(
        dir,
        &BlobRef {
            file: r.file.clone(),
            sha256: r.sha256.clone(),
        },
    )?;
    bitpack::unpack(&bytes, r.count, format.bits()).ok_or_else(|| Error::ShapeMismatch {
        tensor: r.file.clone(),
        expected: bitpack::packed_len(r.count, format.bits()),
        found: bytes.len(),
    })
}

fn read_bias(dir: &Path, r: &BiasRef, expected: usize) -> Result<Vec<i128>> {
    let bytes = read_blob(
        dir,
        &BlobRef {
            file: r.file.clone(),
            sha256: r.sha256.clone(),
        },
    )?;
    let values = i64_from_le(&bytes)
        .filter(|v| v.len() == expected && r.count == expected)
        .ok_or_else(|| Error::ShapeMismatch {
            tensor: r.file.clone(),
            expected,
            found: bytes.len() / 8,
        })?;
    Ok(values.into_iter().map(i128::from).collect())
}

pub fn load_quantized(path: &Path) -> Result<QuantizedFile> {
    let doc: QuantizedDoc = read_json(path)?;
    if doc.format != QUANTIZED_FORMAT {
        return Err(Error::Manifest(format!("expected format `{QUANTIZED_FORMAT}`, found `{}`", doc.format)));
    }
    if doc.version != VERSION {
        return Err(Error::Manifest(format!("unsupported version {}", doc.version)));
    }
    let policy: FormatPolicy = doc.policy.parse()?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut layers = Vec::with_capacity(doc.layers.len());
    for l in doc.layers {
        let op = match l.op {
            OpEntry::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weight_format,
                weights,
                bias,
            } => {
                let geometry = ConvGeometry {
                    in_channels,
                    out_channels,
                    kernel_h: kernel[0],
                    kernel_w: kernel[1],
                    stride,
                    padding,
                };
                QuantOp::Conv2d {
                    geometry,
                    weight_format,
                    weights: read_codes(dir, &weights, weight_format, geometry.weight_shape().iter().product())?,
                    bias: read_bias(dir, &bias, out_channels)?,
                    bias_frac_places: bias.frac_places,
                }
            }
            OpEntry::Dense {
                in_features,
                out_features,
                weight_format,
                weights,
                bias,
            } => QuantOp::Dense {
                in_features,
                out_features,
                weight_format,
                weights: read_codes(dir, &weights, weight_format, in_features * out_features)?,
                bias: read_bias(dir, &bias, out_features)?,
                bias_frac_places: bias.frac_places,
            },
            OpEntry::Relu => QuantOp::Relu,
            OpEntry::MaxPool { kernel, stride } => QuantOp::MaxPool(Pool { kernel, stride }),
            OpEntry::AvgPool { kernel, stride } => QuantOp::AvgPool(Pool { kernel, stride }),
            OpEntry::ResidualAdd { source } => QuantOp::ResidualAdd { source },
            OpEntry::Flatten => QuantOp::Flatten,
        };
        layers.push(QuantizedLayer {
            op,
            output_format: l.output_format,
            assignment: l.assignment,
            weight_mse: l.weight_mse,
        });
    }
    let model = QuantizedModel::from_parts(doc.name, doc.input_shape, doc.bits, policy, doc.input_format, layers)?;
    Ok(QuantizedFile {
        model,
        source: doc.source,
        path: path.to_path_buf(),
    })
}

/// Records the float manifest a quantized model came from.
pub fn source_ref(manifest: &Path) -> Result<SourceRef> {
    let bytes = std::fs::read(manifest).map_err(Error::io(manifest))?;
    let abs = std::fs::canonicalize(manifest).map_err(Error::io(manifest))?;
    Ok(SourceRef {
        manifest: abs,
        sha256: sha256_hex(&bytes),
    })
}
