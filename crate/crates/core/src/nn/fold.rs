use alloc::vec::Vec;

use super::layer::{BatchNorm, Layer};
use super::{Model, NnError};

/// Absorbs every batchnorm into the conv/dense layer directly before it.
///
/// Residual sources are renumbered to the folded layer list. A batchnorm whose
/// predecessor is not conv/dense, or whose pre-normalization activation feeds a
/// residual connection, cannot be folded.
pub fn fold_batchnorm(model: &Model) -> Result<Model, NnError> {
    let old = model.layers();
    let referenced: Vec<usize> = old
        .iter()
        .filter_map(|l| match l {
            Layer::ResidualAdd { source } => Some(*source),
            _ => None,
        })
        .collect();

    let mut layers: Vec<Layer> = Vec::with_capacity(old.len());
    // slot_map[old slot] = new slot
    let mut slot_map = Vec::with_capacity(old.len() + 1);
    slot_map.push(0usize);
    for (i, layer) in old.iter().enumerate() {
        match layer {
            Layer::BatchNorm(bn) => {
                let foldable = i > 0
                    && slot_map[i] == layers.len()
                    && !referenced.contains(&i)
                    && matches!(layers.last(), Some(Layer::Conv2d(_) | Layer::Dense(_)));
                if !foldable {
                    return Err(NnError::UnfoldableBatchNorm { layer: i });
                }
                fold_into(layers.last_mut().expect("checked above"), bn);
                slot_map.push(slot_map[i]);
            }
            Layer::ResidualAdd { source } => {
                layers.push(Layer::ResidualAdd {
                    source: slot_map[*source],
                });
                slot_map.push(layers.len());
            }
            other => {
                layers.push(other.clone());
                slot_map.push(layers.len());
            }
        }
    }
    Model::new(model.name(), model.input_shape().to_vec(), layers)
}

fn fold_into(layer: &mut Layer, bn: &BatchNorm) {
    let (weight, bias) = match layer {
        Layer::Conv2d(c) => (c.weight.data_mut(), &mut c.bias),
        Layer::Dense(d) => (d.weight.data_mut(), &mut d.bias),
        _ => unreachable!("checked by caller"),
    };
    let channels = bias.len();
    let per_out = weight.len() / channels;
    for o in 0..channels {
        let scale = f64::from(bn.gamma[o]) / libm::sqrt(f64::from(bn.var[o]) + f64::from(bn.eps));
        for w in &mut weight[o * per_out..(o + 1) * per_out] {
            *w = (f64::from(*w) * scale) as f32;
        }
        bias[o] = ((f64::from(bias[o]) - f64::from(bn.mean[o])) * scale + f64::from(bn.beta[o])) as f32;
    }
}
