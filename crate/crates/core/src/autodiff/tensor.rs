//! Dense row-major tensors of `f64`.
//!
//! Only vectors (rank 1) and matrices (rank 2) appear in practice; the shape
//! is kept as a dimension list so callers can state intent explicitly.

use crate::error::{Error, Result};

/// A dense tensor: shape plus row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating that the element count matches the shape
    /// and that every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor element {} is {}",
                bad, data[bad]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Rank-1 tensor from a value list.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Rank-2 tensor with `rows * cols` row-major entries.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// (rows, cols) view: vectors are column-like `(len, 1)`.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (self.shape[0], 1),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("tensors of rank {} are not supported", self.shape.len()),
        }
    }
}
