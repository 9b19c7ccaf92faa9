//! Dense row-major tensor over f64.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense tensor. Activations use `[channels, height, width]`;
/// flat feature vectors use `[dim]`; conv weights use
/// `[out_ch, in_ch, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Panics if `data.len() != product(shape)`; debug builds also
    /// reject non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(data.len(), expected, "tensor data length mismatch");
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite tensor entry");
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    /// Length-checked but finiteness-unchecked construction, for layer
    /// outputs: divergence must surface as an error, not a debug panic.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}
