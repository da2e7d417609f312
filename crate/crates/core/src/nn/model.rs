use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::layer::{BatchNorm, Conv2d, Dense, Layer, LayerKind, Pool};
use super::{Classifier, NnError};

/// A validated layer list over 32-bit float parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Per-sample activation shapes; slot 0 is the input.
    shapes: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyModel);
        }
        let kinds: Vec<LayerKind> = layers.iter().map(Layer::kind).collect();
        for (i, l) in layers.iter().enumerate() {
            l.check_params(i)?;
        }
        let shapes = infer_shapes(&input_shape, &kinds)?;
        Ok(Model {
            name: name.into(),
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    /// Activation shapes per slot (`layers().len() + 1` entries).
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().map(|s| s.iter().product()).unwrap_or(0)
    }

    /// Multiply-accumulates for one sample.
    pub fn macs(&self) -> u64 {
        count_macs(self.layers.iter().map(Layer::kind), &self.shapes)
    }

    /// Float forward pass over one sample, returning every activation slot.
    pub fn forward_all(&self, input: &[f32]) -> Result<Vec<Vec<f32>>, NnError> {
        let in_len: usize = self.input_shape.iter().product();
        if input.len() != in_len {
            return Err(NnError::ShapeMismatch {
                layer: None,
                expected: self.input_shape.clone(),
                found: vec![input.len()],
            });
        }
        let mut slots: Vec<Vec<f32>> = Vec::with_capacity(self.layers.len() + 1);
        slots.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &slots[i];
            let shape = &self.shapes[i];
            let y = match layer {
                Layer::Conv2d(c) => conv2d_f32(c, x, shape, &self.shapes[i + 1]),
                Layer::Dense(d) => dense_f32(d, x),
                Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                Layer::MaxPool(p) => pool_f32(*p, x, shape, &self.shapes[i + 1], true),
                Layer::AvgPool(p) => pool_f32(*p, x, shape, &self.shapes[i + 1], false),
                Layer::BatchNorm(b) => batchnorm_f32(b, x, shape),
                Layer::ResidualAdd { source } => {
                    x.iter().zip(&slots[*source]).map(|(a, b)| a + b).collect()
                }
                Layer::Flatten => x.clone(),
            };
            slots.push(y);
        }
        Ok(slots)
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>, NnError> {
        Ok(self.forward_all(input)?.pop().expect("output slot"))
    }
}

impl Classifier for Model {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn logits(&self, input: &[f32]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(input)?.into_iter().map(f64::from).collect())
    }
}

pub(crate) fn infer_shapes(input_shape: &[usize], kinds: &[LayerKind]) -> Result<Vec<Vec<usize>>, NnError> {
    let mut shapes = vec![input_shape.to_vec()];
    for (i, k) in kinds.iter().enumerate() {
        let s = k.output_shape(i, &shapes)?;
        shapes.push(s);
    }
    Ok(shapes)
}

pub(crate) fn count_macs(kinds: impl Iterator<Item = LayerKind>, shapes: &[Vec<usize>]) -> u64 {
    kinds
        .enumerate()
        .filter_map(|(i, k)| k.gemm_dims(&shapes[i], 1))
        .map(|(m, k, n)| (m * k * n) as u64)
        .sum()
}

fn conv2d_f32(c: &Conv2d, x: &[f32], in_shape: &[usize], out_shape: &[usize]) -> Vec<f32> {
    let g = c.geometry;
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let wt = c.weight.data();
    let mut out = vec![0.0f32; g.out_channels * oh * ow];
    for o in 0..g.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = c.bias[o];
                for ch in 0..g.in_channels {
                    for ky in 0..g.kernel_h {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..g.kernel_w {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let wi = ((o * g.in_channels + ch) * g.kernel_h + ky) * g.kernel_w + kx;
                            let xi = (ch * h + iy as usize) * w + ix as usize;
                            acc += wt[wi] * x[xi];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

fn dense_f32(d: &Dense, x: &[f32]) -> Vec<f32> {
    let wt = d.weight.data();
    (0..d.out_features)
        .map(|o| {
            let row = &wt[o * d.in_features..(o + 1) * d.in_features];
            row.iter().zip(x).fold(d.bias[o], |acc, (w, v)| acc + w * v)
        })
        .collect()
}

fn pool_f32(p: Pool, x: &[f32], in_shape: &[usize], out_shape: &[usize], max: bool) -> Vec<f32> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let window = (0..p.kernel).flat_map(|ky| {
                    (0..p.kernel).map(move |kx| x[(ch * h + oy * p.stride + ky) * w + ox * p.stride + kx])
                });
                out.push(if max {
                    window.fold(f32::NEG_INFINITY, f32::max)
                } else {
                    window.sum::<f32>() / (p.kernel * p.kernel) as f32
                });
            }
        }
    }
    out
}

fn batchnorm_f32(b: &BatchNorm, x: &[f32], shape: &[usize]) -> Vec<f32> {
    let per_channel: usize = shape[1..].iter().product();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / per_channel.max(1);
            (v - b.mean[c]) / libm::sqrtf(b.var[c] + b.eps) * b.gamma[c] + b.beta[c]
        })
        .collect()
}
