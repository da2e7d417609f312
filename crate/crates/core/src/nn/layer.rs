//! Layer hyperparameters, parameters and shape inference.

use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Products per output element.
    pub fn reduction_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    fn out_dim(&self, input: usize, kernel: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        if padded < kernel || self.stride == 0 {
            None
        } else {
            Some((padded - kernel) / self.stride + 1)
        }
    }
}

/// Square pooling window without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pool {
    pub kernel: usize,
    pub stride: usize,
}

/// Layer kind and hyperparameters, without parameter tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d(ConvGeometry),
    Dense { in_features: usize, out_features: usize },
    Relu,
    MaxPool(Pool),
    AvgPool(Pool),
    BatchNorm { channels: usize },
    /// Adds activation slot `source` (0 is the model input, `i + 1` the output
    /// of layer `i`) to the incoming activation.
    ResidualAdd { source: usize },
    Flatten,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d(_) => "conv2d",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPool(_) => "avgpool",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::ResidualAdd { .. } => "residual_add",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, LayerKind::Conv2d(_) | LayerKind::Dense { .. })
    }

    /// Per-sample output shape. `slots` holds the shapes of every earlier
    /// activation slot, the last one being this layer's input.
    pub fn output_shape(&self, index: usize, slots: &[Vec<usize>]) -> Result<Vec<usize>, NnError> {
        let input = slots.last().expect("at least the input slot");
        let mismatch = |expected: Vec<usize>| NnError::ShapeMismatch {
            layer: Some(index),
            expected,
            found: input.clone(),
        };
        match *self {
            LayerKind::Conv2d(g) => {
                let [c, h, w] = input[..] else {
                    return Err(mismatch(vec![g.in_channels, 0, 0]));
                };
                if c != g.in_channels {
                    return Err(mismatch(vec![g.in_channels, h, w]));
                }
                match (g.out_dim(h, g.kernel_h), g.out_dim(w, g.kernel_w)) {
                    (Some(oh), Some(ow)) => Ok(vec![g.out_channels, oh, ow]),
                    _ => Err(mismatch(vec![g.in_channels, g.kernel_h, g.kernel_w])),
                }
            }
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                if input[..] != [in_features] {
                    return Err(mismatch(vec![in_features]));
                }
                Ok(vec![out_features])
            }
            LayerKind::Relu | LayerKind::Flatten if input.is_empty() => Err(mismatch(vec![1])),
            LayerKind::Relu => Ok(input.clone()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::MaxPool(p) | LayerKind::AvgPool(p) => {
                let [c, h, w] = input[..] else {
                    return Err(mismatch(vec![0, p.kernel, p.kernel]));
                };
                if p.kernel == 0 || p.stride == 0 || h < p.kernel || w < p.kernel {
                    return Err(mismatch(vec![c, p.kernel, p.kernel]));
                }
                Ok(vec![c, (h - p.kernel) / p.stride + 1, (w - p.kernel) / p.stride + 1])
            }
            LayerKind::BatchNorm { channels } => {
                if input.first() != Some(&channels) {
                    return Err(mismatch(vec![channels]));
                }
                Ok(input.clone())
            }
            LayerKind::ResidualAdd { source } => {
                if source >= slots.len() {
                    return Err(NnError::InvalidResidual { layer: index, slot: source });
                }
                if slots[source] != *input {
                    return Err(mismatch(slots[source].clone()));
                }
                Ok(input.clone())
            }
        }
    }

    /// GEMM dimensions `(M, K, N)` of a conv/dense layer for a given input
    /// shape: dense is `(out, in, batch)`, conv is
    /// `(out_channels, kh * kw * in_channels, output_pixels * batch)`.
    pub fn gemm_dims(&self, input: &[usize], batch: usize) -> Option<(usize, usize, usize)> {
        match *self {
            LayerKind::Dense {
                in_features,
                out_features,
            } => Some((out_features, in_features, batch)),
            LayerKind::Conv2d(g) => {
                let (h, w) = (input[1], input[2]);
                let oh = g.out_dim(h, g.kernel_h)?;
                let ow = g.out_dim(w, g.kernel_w)?;
                Some((g.out_channels, g.reduction_len(), oh * ow * batch))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub geometry: ConvGeometry,
    /// OIHW.
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out_features, in_features]`.
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    Relu,
    MaxPool(Pool),
    AvgPool(Pool),
    BatchNorm(BatchNorm),
    ResidualAdd { source: usize },
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(c) => LayerKind::Conv2d(c.geometry),
            Layer::Dense(d) => LayerKind::Dense {
                in_features: d.in_features,
                out_features: d.out_features,
            },
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool(p) => LayerKind::MaxPool(*p),
            Layer::AvgPool(p) => LayerKind::AvgPool(*p),
            Layer::BatchNorm(b) => LayerKind::BatchNorm {
                channels: b.mean.len(),
            },
            Layer::ResidualAdd { source } => LayerKind::ResidualAdd { source: *source },
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    pub fn weights(&self) -> Option<&[f32]> {
        match self {
            Layer::Conv2d(c) => Some(c.weight.data()),
            Layer::Dense(d) => Some(d.weight.data()),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&[f32]> {
        match self {
            Layer::Conv2d(c) => Some(&c.bias),
            Layer::Dense(d) => Some(&d.bias),
            _ => None,
        }
    }

    /// Checks parameter tensor sizes against the hyperparameters.
    pub(crate) fn check_params(&self, index: usize) -> Result<(), NnError> {
        let check = |expected: Vec<usize>, found: &[usize]| {
            if expected[..] == *found {
                Ok(())
            } else {
                Err(NnError::ShapeMismatch {
                    layer: Some(index),
                    expected,
                    found: found.to_vec(),
                })
            }
        };
        match self {
            Layer::Conv2d(c) => {
                if c.geometry.stride == 0 {
                    return Err(NnError::InvalidParameter {
                        layer: index,
                        reason: "conv stride must be positive",
                    });
                }
                check(c.geometry.weight_shape(), c.weight.shape())?;
                check(vec![c.geometry.out_channels], &[c.bias.len()])
            }
            Layer::Dense(d) => {
                check(vec![d.out_features, d.in_features], d.weight.shape())?;
                check(vec![d.out_features], &[d.bias.len()])
            }
            Layer::BatchNorm(b) => {
                let c = b.mean.len();
                for v in [&b.var, &b.gamma, &b.beta] {
                    check(vec![c], &[v.len()])?;
                }
                if b.var.iter().any(|&v| (v + b.eps).is_nan() || v + b.eps <= 0.0) {
                    return Err(NnError::InvalidParameter {
                        layer: index,
                        reason: "batchnorm variance + eps must be positive",
                    });
                }
                Ok(())
            }
            Layer::MaxPool(p) | Layer::AvgPool(p) if p.kernel == 0 || p.stride == 0 => {
                Err(NnError::InvalidParameter {
                    layer: index,
                    reason: "pool kernel and stride must be positive",
                })
            }
            _ => Ok(()),
        }
    }
}
