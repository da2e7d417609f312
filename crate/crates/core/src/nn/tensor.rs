use alloc::vec::Vec;

use super::NnError;

/// A dense row-major `f32` tensor (NCHW for feature maps, OIHW for kernels).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NnError> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(NnError::ShapeMismatch {
                layer: None,
                expected: shape,
                found: alloc::vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        Tensor {
            shape,
            data: alloc::vec![0.0; count],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension, i.e. the number of samples in a batch.
    pub fn batch_len(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Shape of one sample of a batch.
    pub fn sample_shape(&self) -> &[usize] {
        self.shape.get(1..).unwrap_or(&[])
    }

    /// The `i`-th sample of a batch.
    pub fn sample(&self, i: usize) -> &[f32] {
        let stride: usize = self.sample_shape().iter().product();
        &self.data[i * stride..(i + 1) * stride]
    }

    /// Samples `range` of a batch as a new batch tensor.
    pub fn slice_batch(&self, range: core::ops::Range<usize>) -> Tensor {
        let stride: usize = self.sample_shape().iter().product();
        let mut shape = self.shape.clone();
        shape[0] = range.len();
        Tensor {
            shape,
            data: self.data[range.start * stride..range.end * stride].to_vec(),
        }
    }
}
