//! Per-layer quantization and the quantized inference path.
//!
//! Every activation slot carries one format. Conv/dense outputs are computed in
//! a quire and rounded once into the layer's output format, which is also the
//! input format of whatever consumes that slot. ReLU, max-pooling and flatten
//! are exact on codes and keep their input's format.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::layer::{ConvGeometry, Layer, LayerKind, Pool};
use super::model::{count_macs, infer_shapes};
use super::{Calibration, Classifier, Model, NnError};
use crate::dot::{quire_width, Quire};
use crate::dyadic::Dyadic;
use crate::formats::{Code, Format, FormatError, FormatKind, RoundingTable, TfxConfig};
use crate::select::{
    select_fxp_params, select_params, select_run_limit, FormatAssignment, FxpAssignment, LayerStats,
};

/// How formats are chosen for weights and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatPolicy {
    /// Per-layer `IS`/`SC` selection for tapered fixed-point.
    TfxAuto,
    /// Per-layer fraction-width search for fixed-point.
    FxpAuto,
    /// One format for every weight and activation tensor.
    Fixed(Format),
}

impl FormatPolicy {
    pub fn kind(&self) -> FormatKind {
        match self {
            FormatPolicy::TfxAuto => FormatKind::Tfx,
            FormatPolicy::FxpAuto => FormatKind::Fxp,
            FormatPolicy::Fixed(f) => f.kind(),
        }
    }
}

impl fmt::Display for FormatPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatPolicy::TfxAuto => f.write_str("tfx:auto"),
            FormatPolicy::FxpAuto => f.write_str("fxp:auto"),
            FormatPolicy::Fixed(fmt) => fmt.fmt(f),
        }
    }
}

impl core::str::FromStr for FormatPolicy {
    type Err = FormatError;

    /// `tfx:auto`, `fxp:auto`, or a fixed format descriptor.
    fn from_str(s: &str) -> Result<Self, FormatError> {
        match s.trim() {
            "tfx:auto" => Ok(FormatPolicy::TfxAuto),
            "fxp:auto" => Ok(FormatPolicy::FxpAuto),
            other => other.parse().map(FormatPolicy::Fixed),
        }
    }
}

/// The selection made for one weighted layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LayerAssignment {
    Tfx(FormatAssignment),
    Fxp(FxpAssignment),
    Fixed(Format),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantOp {
    Conv2d {
        geometry: ConvGeometry,
        weight_format: Format,
        weights: Vec<Code>,
        /// Bias as an integer at `bias_frac_places` fractional places.
        bias: Vec<i128>,
        bias_frac_places: u32,
    },
    Dense {
        in_features: usize,
        out_features: usize,
        weight_format: Format,
        weights: Vec<Code>,
        bias: Vec<i128>,
        bias_frac_places: u32,
    },
    Relu,
    MaxPool(Pool),
    AvgPool(Pool),
    ResidualAdd { source: usize },
    Flatten,
}

impl QuantOp {
    pub fn kind(&self) -> LayerKind {
        match self {
            QuantOp::Conv2d { geometry, .. } => LayerKind::Conv2d(*geometry),
            QuantOp::Dense {
                in_features,
                out_features,
                ..
            } => LayerKind::Dense {
                in_features: *in_features,
                out_features: *out_features,
            },
            QuantOp::Relu => LayerKind::Relu,
            QuantOp::MaxPool(p) => LayerKind::MaxPool(*p),
            QuantOp::AvgPool(p) => LayerKind::AvgPool(*p),
            QuantOp::ResidualAdd { source } => LayerKind::ResidualAdd { source: *source },
            QuantOp::Flatten => LayerKind::Flatten,
        }
    }

    pub fn weight_format(&self) -> Option<Format> {
        match self {
            QuantOp::Conv2d { weight_format, .. } | QuantOp::Dense { weight_format, .. } => Some(*weight_format),
            _ => None,
        }
    }

    pub fn weights(&self) -> Option<&[Code]> {
        match self {
            QuantOp::Conv2d { weights, .. } | QuantOp::Dense { weights, .. } => Some(weights),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub op: QuantOp,
    pub output_format: Format,
    pub assignment: Option<LayerAssignment>,
    /// Mean squared weight quantization error (weighted layers only).
    pub weight_mse: Option<f64>,
}

/// A model with every weight tensor stored as codes and a format per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    name: String,
    input_shape: Vec<usize>,
    bits: u32,
    policy: FormatPolicy,
    input_format: Format,
    layers: Vec<QuantizedLayer>,
    shapes: Vec<Vec<usize>>,
    /// Weight codes decoded to quire numerators, per layer (empty if unweighted).
    numerators: Vec<Vec<i64>>,
    /// Output rounding table of every weighted layer.
    tables: Vec<Option<RoundingTable>>,
}

impl QuantizedModel {
    /// Assembles and validates a quantized model (used by loaders).
    pub fn from_parts(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        bits: u32,
        policy: FormatPolicy,
        input_format: Format,
        layers: Vec<QuantizedLayer>,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyModel);
        }
        let kinds: Vec<LayerKind> = layers.iter().map(|l| l.op.kind()).collect();
        let shapes = infer_shapes(&input_shape, &kinds)?;
        let mut slot_formats = vec![input_format];
        for (i, l) in layers.iter().enumerate() {
            let fa = slot_formats[i];
            if let (Some(fw), Some(codes)) = (l.op.weight_format(), l.op.weights()) {
                if let Some(c) = codes.iter().find(|c| (c.bits() as u32) >> fw.bits() != 0) {
                    return Err(FormatError::CodeTooWide {
                        bits: c.bits() as u32,
                        n: fw.bits(),
                    }
                    .into());
                }
            }
            let expect_bias_places = l.op.weight_format().map(|fw| fw.frac_places() + fa.frac_places());
            match &l.op {
                QuantOp::Conv2d {
                    geometry,
                    weights,
                    bias,
                    bias_frac_places,
                    ..
                } => {
                    check_len(i, geometry.weight_shape().iter().product(), weights.len())?;
                    check_len(i, geometry.out_channels, bias.len())?;
                    check_places(i, expect_bias_places, *bias_frac_places)?;
                }
                QuantOp::Dense {
                    in_features,
                    out_features,
                    weights,
                    bias,
                    bias_frac_places,
                    ..
                } => {
                    check_len(i, in_features * out_features, weights.len())?;
                    check_len(i, *out_features, bias.len())?;
                    check_places(i, expect_bias_places, *bias_frac_places)?;
                }
                QuantOp::Relu | QuantOp::MaxPool(_) | QuantOp::Flatten if l.output_format != fa => {
                    return Err(NnError::InvalidParameter {
                        layer: i,
                        reason: "exact layers must keep their input format",
                    });
                }
                _ => {}
            }
            slot_formats.push(l.output_format);
        }
        let numerators = layers
            .iter()
            .map(|l| match (l.op.weight_format(), l.op.weights()) {
                (Some(fw), Some(codes)) => codes.iter().map(|&c| fw.numerator(c)).collect(),
                _ => Vec::new(),
            })
            .collect();
        let tables = layers
            .iter()
            .map(|l| l.op.weight_format().map(|_| RoundingTable::new(l.output_format)))
            .collect();
        Ok(QuantizedModel {
            numerators,
            tables,
            name: name.into(),
            input_shape,
            bits,
            policy,
            input_format,
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

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn policy(&self) -> FormatPolicy {
        self.policy
    }

    pub fn input_format(&self) -> Format {
        self.input_format
    }

    pub fn layers(&self) -> &[QuantizedLayer] {
        &self.layers
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Format of activation slot `slot` (0 is the input).
    pub fn slot_format(&self, slot: usize) -> Format {
        if slot == 0 {
            self.input_format
        } else {
            self.layers[slot - 1].output_format
        }
    }

    pub fn macs(&self) -> u64 {
        count_macs(self.layers.iter().map(|l| l.op.kind()), &self.shapes)
    }

    /// Weight-quantization MSE of every weighted layer, in layer order.
    pub fn layer_mse(&self) -> Vec<f64> {
        self.layers.iter().filter_map(|l| l.weight_mse).collect()
    }

    /// Quantized forward pass over one float sample; returns the codes of
    /// every activation slot.
    pub fn forward_codes(&self, input: &[f32]) -> Result<Vec<Vec<Code>>, NnError> {
        let in_len: usize = self.input_shape.iter().product();
        if input.len() != in_len {
            return Err(NnError::ShapeMismatch {
                layer: None,
                expected: self.input_shape.clone(),
                found: vec![input.len()],
            });
        }
        let mut slots: Vec<Vec<Code>> = Vec::with_capacity(self.layers.len() + 1);
        slots.push(
            input
                .iter()
                .map(|&x| self.input_format.quantize(f64::from(x)))
                .collect::<Result<_, FormatError>>()?,
        );
        for (i, layer) in self.layers.iter().enumerate() {
            let fa = self.slot_format(i);
            let out = layer.output_format;
            let x = &slots[i];
            let y = match &layer.op {
                QuantOp::Conv2d {
                    geometry,
                    weight_format,
                    bias,
                    ..
                } => conv2d_q(
                    geometry,
                    &self.numerators[i],
                    *weight_format,
                    bias,
                    x,
                    fa,
                    self.tables[i].as_ref().expect("weighted layer table"),
                    &self.shapes[i],
                    &self.shapes[i + 1],
                )?,
                QuantOp::Dense {
                    in_features,
                    out_features,
                    weight_format,
                    bias,
                    ..
                } => dense_q(
                    *in_features,
                    *out_features,
                    &self.numerators[i],
                    *weight_format,
                    bias,
                    x,
                    fa,
                    self.tables[i].as_ref().expect("weighted layer table"),
                )?,
                QuantOp::Relu => x.iter().map(|&c| relu_code(c, fa)).collect(),
                QuantOp::MaxPool(p) => maxpool_q(*p, x, fa, &self.shapes[i], &self.shapes[i + 1]),
                QuantOp::AvgPool(p) => avgpool_q(*p, x, fa, out, &self.shapes[i], &self.shapes[i + 1]),
                QuantOp::ResidualAdd { source } => {
                    let fb = self.slot_format(*source);
                    x.iter()
                        .zip(&slots[*source])
                        .map(|(&a, &b)| out.quantize_exact(fa.value(a).exact_add(fb.value(b))))
                        .collect()
                }
                QuantOp::Flatten => x.clone(),
            };
            slots.push(y);
        }
        Ok(slots)
    }
}

impl Classifier for QuantizedModel {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn logits(&self, input: &[f32]) -> Result<Vec<f64>, NnError> {
        let mut slots = self.forward_codes(input)?;
        let fmt = self.slot_format(self.layers.len());
        Ok(slots.pop().expect("output slot").into_iter().map(|c| fmt.to_real(c)).collect())
    }

    fn layer_mse(&self) -> Vec<f64> {
        QuantizedModel::layer_mse(self)
    }
}

fn check_len(layer: usize, expected: usize, found: usize) -> Result<(), NnError> {
    if expected == found {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch {
            layer: Some(layer),
            expected: vec![expected],
            found: vec![found],
        })
    }
}

fn check_places(layer: usize, expected: Option<u32>, found: u32) -> Result<(), NnError> {
    if expected == Some(found) {
        Ok(())
    } else {
        Err(NnError::InvalidParameter {
            layer,
            reason: "bias binary point does not match the operand formats",
        })
    }
}

/// Quantizes a (batchnorm-free) model using calibration statistics.
pub fn quantize_model(
    model: &Model,
    bits: u32,
    policy: FormatPolicy,
    calibration: &Calibration,
) -> Result<QuantizedModel, NnError> {
    let bits = match policy {
        FormatPolicy::Fixed(f) => f.bits(),
        _ => bits,
    };
    if !(crate::formats::MIN_BITS..=crate::formats::MAX_BITS).contains(&bits) {
        return Err(FormatError::UnsupportedWidth(bits).into());
    }
    if calibration.layers.len() != model.layers().len() {
        return Err(NnError::StatsMismatch {
            expected: model.layers().len(),
            found: calibration.layers.len(),
        });
    }
    let activation_format = |amax: f64| -> Result<Format, NnError> {
        Ok(match policy {
            FormatPolicy::TfxAuto => TfxConfig::new(bits, select_run_limit(amax, bits), 0)?.into(),
            FormatPolicy::FxpAuto => select_fxp_params(amax, bits)?.into(),
            FormatPolicy::Fixed(f) => f,
        })
    };
    let input_format = activation_format(calibration.input_amax)?;
    let mut slot_formats = vec![input_format];
    let mut layers = Vec::with_capacity(model.layers().len());
    for (i, (layer, stats)) in model.layers().iter().zip(&calibration.layers).enumerate() {
        let fa = slot_formats[i];
        let q = match layer {
            Layer::Conv2d(_) | Layer::Dense(_) => {
                let weights = layer.weights().expect("weighted layer");
                let w_amax = super::calibrate::amax(weights);
                let stats = LayerStats {
                    w_amax,
                    a_amax: stats.a_amax,
                };
                let (weight_format, output_format, assignment) = match policy {
                    FormatPolicy::TfxAuto => {
                        let a = select_params(stats, bits)?;
                        (
                            a.weight_format().into(),
                            a.activation_format().into(),
                            LayerAssignment::Tfx(a),
                        )
                    }
                    FormatPolicy::FxpAuto => {
                        let a = crate::select::select_fxp_assignment(stats, bits)?;
                        (a.weight.into(), a.activation.into(), LayerAssignment::Fxp(a))
                    }
                    FormatPolicy::Fixed(f) => (f, f, LayerAssignment::Fixed(f)),
                };
                let (codes, mse) = quantize_weights(weights, weight_format)?;
                let places = weight_format.frac_places() + fa.frac_places();
                let bias = layer
                    .bias()
                    .expect("weighted layer")
                    .iter()
                    .map(|&b| align_bias(b, places, i))
                    .collect::<Result<Vec<_>, _>>()?;
                let op = match layer {
                    Layer::Conv2d(c) => QuantOp::Conv2d {
                        geometry: c.geometry,
                        weight_format,
                        weights: codes,
                        bias,
                        bias_frac_places: places,
                    },
                    Layer::Dense(d) => QuantOp::Dense {
                        in_features: d.in_features,
                        out_features: d.out_features,
                        weight_format,
                        weights: codes,
                        bias,
                        bias_frac_places: places,
                    },
                    _ => unreachable!(),
                };
                QuantizedLayer {
                    op,
                    output_format,
                    assignment: Some(assignment),
                    weight_mse: Some(mse),
                }
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Flatten => QuantizedLayer {
                op: match layer {
                    Layer::Relu => QuantOp::Relu,
                    Layer::MaxPool(p) => QuantOp::MaxPool(*p),
                    _ => QuantOp::Flatten,
                },
                output_format: fa,
                assignment: None,
                weight_mse: None,
            },
            Layer::AvgPool(p) => QuantizedLayer {
                op: QuantOp::AvgPool(*p),
                output_format: activation_format(stats.a_amax)?,
                assignment: None,
                weight_mse: None,
            },
            Layer::ResidualAdd { source } => QuantizedLayer {
                op: QuantOp::ResidualAdd { source: *source },
                output_format: activation_format(stats.a_amax)?,
                assignment: None,
                weight_mse: None,
            },
            Layer::BatchNorm(_) => return Err(NnError::UnfoldedBatchNorm { layer: i }),
        };
        slot_formats.push(q.output_format);
        layers.push(q);
    }
    QuantizedModel::from_parts(
        model.name(),
        model.input_shape().to_vec(),
        bits,
        policy,
        input_format,
        layers,
    )
}

/// Codes and mean squared error of a weight tensor in `format`.
pub fn quantize_weights(weights: &[f32], format: Format) -> Result<(Vec<Code>, f64), NnError> {
    let mut sse = 0.0f64;
    let codes = weights
        .iter()
        .map(|&w| {
            let c = format.quantize(f64::from(w))?;
            let e = f64::from(w) - format.to_real(c);
            sse += e * e;
            Ok(c)
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let mse = if weights.is_empty() {
        0.0
    } else {
        sse / weights.len() as f64
    };
    Ok((codes, mse))
}

/// `round_half_even(b * 2^places)`.
fn align_bias(b: f32, places: u32, layer: usize) -> Result<i128, NnError> {
    let scaled = libm::ldexp(f64::from(b), places as i32);
    if !scaled.is_finite() || libm::fabs(scaled) >= 1.0e30 {
        return Err(NnError::InvalidParameter {
            layer,
            reason: "bias is not finite or too large for the accumulator",
        });
    }
    Ok(libm::rint(scaled) as i128)
}

fn relu_code(c: Code, f: Format) -> Code {
    if c.signed(f.bits()) < 0 {
        f.zero_code()
    } else {
        c
    }
}

fn layer_quire(k: usize, fw: Format, fa: Format, bias: &[i128]) -> Quire {
    let bias_bits = bias
        .iter()
        .map(|b| 128 - b.unsigned_abs().leading_zeros())
        .max()
        .unwrap_or(0);
    // One extra bit so the bias can be added on top of a full product sum.
    let width = quire_width(k.max(1), fw, fa).max(bias_bits + 1) + 1;
    Quire::with_width(width, k, fw.frac_places() + fa.frac_places())
}

#[allow(clippy::too_many_arguments)]
fn conv2d_q(
    g: &ConvGeometry,
    wn: &[i64],
    fw: Format,
    bias: &[i128],
    x: &[Code],
    fa: Format,
    out: &RoundingTable,
    in_shape: &[usize],
    out_shape: &[usize],
) -> Result<Vec<Code>, NnError> {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let xn: Vec<i64> = x.iter().map(|&c| fa.numerator(c)).collect();
    let template = layer_quire(g.reduction_len(), fw, fa, bias);
    let mut y = Vec::with_capacity(g.out_channels * oh * ow);
    for (o, &b) in bias.iter().enumerate() {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut q = template.clone();
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
                            q.mac_numerators(wn[wi], xn[xi])?;
                        }
                    }
                }
                q.add_aligned(b)?;
                y.push(q.finalize_with(out));
            }
        }
    }
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
fn dense_q(
    in_features: usize,
    out_features: usize,
    wn: &[i64],
    fw: Format,
    bias: &[i128],
    x: &[Code],
    fa: Format,
    out: &RoundingTable,
) -> Result<Vec<Code>, NnError> {
    let xn: Vec<i64> = x.iter().map(|&c| fa.numerator(c)).collect();
    let template = layer_quire(in_features, fw, fa, bias);
    (0..out_features)
        .map(|o| {
            let mut q = template.clone();
            let row = &wn[o * in_features..(o + 1) * in_features];
            for (&wv, &xv) in row.iter().zip(&xn) {
                q.mac_numerators(wv, xv)?;
            }
            q.add_aligned(bias[o])?;
            Ok(q.finalize_with(out))
        })
        .collect()
}

fn pool_windows(
    p: Pool,
    in_shape: &[usize],
    out_shape: &[usize],
) -> impl Iterator<Item = impl Iterator<Item = usize>> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    (0..c).flat_map(move |ch| {
        (0..oh).flat_map(move |oy| {
            (0..ow).map(move |ox| {
                (0..p.kernel).flat_map(move |ky| {
                    (0..p.kernel).map(move |kx| (ch * h + oy * p.stride + ky) * w + ox * p.stride + kx)
                })
            })
        })
    })
}

fn maxpool_q(p: Pool, x: &[Code], f: Format, in_shape: &[usize], out_shape: &[usize]) -> Vec<Code> {
    let n = f.bits();
    pool_windows(p, in_shape, out_shape)
        .map(|win| win.map(|i| x[i]).max_by_key(|c| c.signed(n)).expect("non-empty window"))
        .collect()
}

fn avgpool_q(p: Pool, x: &[Code], fa: Format, out: Format, in_shape: &[usize], out_shape: &[usize]) -> Vec<Code> {
    let places = fa.frac_places() as i32;
    let count = (p.kernel * p.kernel) as u64;
    pool_windows(p, in_shape, out_shape)
        .map(|win| {
            let sum: i128 = win.map(|i| fa.numerator(x[i]) as i128).sum();
            out.quantize_ratio(Dyadic::new(sum, -places), count)
        })
        .collect()
}
