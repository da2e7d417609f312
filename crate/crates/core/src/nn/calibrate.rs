use alloc::vec::Vec;

use super::{Model, NnError, Tensor};
use crate::select::LayerStats;

/// Max-abs statistics gathered from a float forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    /// Max |x| over the model input.
    pub input_amax: f64,
    /// One entry per layer: max |weight| (0 for parameterless layers) and max
    /// |output activation|.
    pub layers: Vec<LayerStats>,
}

impl Calibration {
    /// Elementwise max of two calibrations of the same model.
    pub fn merge(&self, other: &Calibration) -> Calibration {
        Calibration {
            input_amax: self.input_amax.max(other.input_amax),
            layers: self
                .layers
                .iter()
                .zip(&other.layers)
                .map(|(a, b)| LayerStats {
                    w_amax: a.w_amax.max(b.w_amax),
                    a_amax: a.a_amax.max(b.a_amax),
                })
                .collect(),
        }
    }
}

/// Runs the float path over a batch `[N, ...input_shape]` and records the
/// largest activation magnitude at every layer output.
pub fn calibrate(model: &Model, samples: &Tensor) -> Result<Calibration, NnError> {
    if samples.batch_len() == 0 || samples.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if samples.sample_shape() != model.input_shape() {
        return Err(NnError::ShapeMismatch {
            layer: None,
            expected: model.input_shape().to_vec(),
            found: samples.sample_shape().to_vec(),
        });
    }
    let mut cal = Calibration {
        input_amax: 0.0,
        layers: model
            .layers()
            .iter()
            .map(|l| LayerStats {
                w_amax: l.weights().map(amax).unwrap_or(0.0),
                a_amax: 0.0,
            })
            .collect(),
    };
    for i in 0..samples.batch_len() {
        let slots = model.forward_all(samples.sample(i))?;
        cal.input_amax = cal.input_amax.max(amax(&slots[0]));
        for (stats, act) in cal.layers.iter_mut().zip(&slots[1..]) {
            stats.a_amax = stats.a_amax.max(amax(act));
        }
    }
    Ok(cal)
}

pub(crate) fn amax(values: &[f32]) -> f64 {
    values.iter().fold(0.0f64, |m, &v| m.max(f64::from(v).abs()))
}
