use alloc::vec::Vec;

use super::{NnError, Tensor};

/// Anything that maps one input sample to class logits.
pub trait Classifier {
    fn input_shape(&self) -> &[usize];

    fn logits(&self, input: &[f32]) -> Result<Vec<f64>, NnError>;

    /// Per-layer weight-quantization MSE; empty for float models.
    fn layer_mse(&self) -> Vec<f64> {
        Vec::new()
    }

    fn classify(&self, input: &[f32]) -> Result<usize, NnError> {
        Ok(argmax(&self.logits(input)?))
    }
}

/// Index of the largest logit; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Labeled samples `[N, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<u32>) -> Result<Self, NnError> {
        if inputs.batch_len() != labels.len() {
            return Err(NnError::LabelCountMismatch {
                samples: inputs.batch_len(),
                labels: labels.len(),
            });
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            inputs: self.inputs.slice_batch(0..n),
            labels: self.labels[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub top1_accuracy: f64,
    pub layer_mse: Vec<f64>,
    pub samples: usize,
}

impl EvalReport {
    pub fn mean_mse(&self) -> f64 {
        if self.layer_mse.is_empty() {
            0.0
        } else {
            self.layer_mse.iter().sum::<f64>() / self.layer_mse.len() as f64
        }
    }

    /// Combines reports over disjoint sample sets.
    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        let samples = self.samples + other.samples;
        let correct = self.top1_accuracy * self.samples as f64 + other.top1_accuracy * other.samples as f64;
        EvalReport {
            top1_accuracy: if samples == 0 { 0.0 } else { correct / samples as f64 },
            layer_mse: self.layer_mse.clone(),
            samples,
        }
    }
}

/// Predicted class of every sample.
pub fn predict<C: Classifier + ?Sized>(model: &C, inputs: &Tensor) -> Result<Vec<usize>, NnError> {
    if inputs.sample_shape() != model.input_shape() {
        return Err(NnError::ShapeMismatch {
            layer: None,
            expected: model.input_shape().to_vec(),
            found: inputs.sample_shape().to_vec(),
        });
    }
    (0..inputs.batch_len()).map(|i| model.classify(inputs.sample(i))).collect()
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<EvalReport, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let predictions = predict(model, data.inputs())?;
    let correct = predictions
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| **p == **l as usize)
        .count();
    Ok(EvalReport {
        top1_accuracy: correct as f64 / data.len() as f64,
        layer_mse: model.layer_mse(),
        samples: data.len(),
    })
}

/// Fraction of samples on which two classifiers pick the same class.
pub fn argmax_agreement<A, B>(a: &A, b: &B, inputs: &Tensor) -> Result<f64, NnError>
where
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
{
    if inputs.batch_len() == 0 {
        return Err(NnError::EmptyBatch);
    }
    let pa = predict(a, inputs)?;
    let pb = predict(b, inputs)?;
    let same = pa.iter().zip(&pb).filter(|(x, y)| x == y).count();
    Ok(same as f64 / pa.len() as f64)
}
