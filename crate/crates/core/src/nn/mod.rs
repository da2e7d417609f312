//! A minimal inference engine with a float reference path and a quantized
//! path whose conv/dense outputs go through the exact quire.

mod calibrate;
mod eval;
mod fold;
pub mod layer;
mod model;
mod quant;
mod tensor;

use alloc::vec::Vec;

pub use calibrate::{calibrate, Calibration};
pub use eval::{argmax, argmax_agreement, evaluate, predict, Classifier, Dataset, EvalReport};
pub use fold::fold_batchnorm;
pub use layer::{BatchNorm, Conv2d, ConvGeometry, Dense, Layer, LayerKind, Pool};
pub use model::Model;
pub use quant::{
    quantize_model, quantize_weights, FormatPolicy, LayerAssignment, QuantOp, QuantizedLayer, QuantizedModel,
};
pub use tensor::Tensor;

use crate::dot::DotError;
use crate::formats::FormatError;
use crate::select::SelectError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("model has no layers")]
    EmptyModel,
    #[error("shape mismatch at {}: expected {expected:?}, found {found:?}", layer_name(*.layer))]
    ShapeMismatch {
        layer: Option<usize>,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("layer {layer}: residual source slot {slot} is not an earlier activation")]
    InvalidResidual { layer: usize, slot: usize },
    #[error("layer {layer}: batchnorm has no conv/dense layer to fold into")]
    UnfoldableBatchNorm { layer: usize },
    #[error("layer {layer}: batchnorm must be folded before quantization")]
    UnfoldedBatchNorm { layer: usize },
    #[error("layer {layer}: {reason}")]
    InvalidParameter { layer: usize, reason: &'static str },
    #[error("statistics cover {found} layers, model has {expected}")]
    StatsMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{samples} samples but {labels} labels")]
    LabelCountMismatch { samples: usize, labels: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Dot(#[from] DotError),
}

fn layer_name(layer: Option<usize>) -> alloc::string::String {
    match layer {
        Some(i) => alloc::format!("layer {i}"),
        None => "input".into(),
    }
}
