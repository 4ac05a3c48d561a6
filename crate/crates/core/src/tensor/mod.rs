//! Dense f64 tensors and the reverse-mode tape that differentiates them.
//!
//! The engine is deliberately small: it supports exactly the shapes and
//! operations the forecasting network needs (up to three axes, row-major
//! storage, full-batch training). Gradients are computed by recording a
//! [`tape::Tape`] during the forward pass and sweeping it once in reverse.

pub mod adam;
pub mod check;
pub mod tape;

pub use adam::AdamState;
pub use check::gradient_check;
pub use tape::{DropoutMode, NodeId, Tape};

use thiserror::Error;

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("tensors are limited to 1..=3 axes with positive extents, got {0:?}")]
    BadRank(Vec<usize>),
    #[error("element count {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    BadDropoutRate(f64),
    #[error("gather index {index} out of bounds for {len} elements")]
    GatherOutOfBounds { index: usize, len: usize },
    #[error("cannot broadcast {from:?} to {to:?}")]
    BadBroadcast { from: Vec<usize>, to: Vec<usize> },
    #[error("gradient length {got} does not match parameter length {expected}")]
    GradLength { got: usize, expected: usize },
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn validate_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() || shape.len() > 3 || shape.iter().any(|&e| e == 0) {
        return Err(TensorError::BadRank(shape.to_vec()));
    }
    Ok(())
}

/// A dense row-major tensor of 64-bit floats with an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        if numel(&shape) != data.len() {
            return Err(TensorError::LengthMismatch {
                len: data.len(),
                shape,
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// A learnable tensor: `requires_grad` set, gradient initially absent.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let n = numel(&shape);
        Self::new(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![1], vec![v]).expect("scalar shape is valid")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Current gradient, if one has been accumulated.
    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    /// Repeated calls accumulate, matching the backward-pass contract.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<(), TensorError> {
        if g.len() != self.data.len() {
            return Err(TensorError::GradLength {
                got: g.len(),
                expected: self.data.len(),
            });
        }
        let grad = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (dst, src) in grad.iter_mut().zip(g) {
            *dst += src;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Applies `update` element-wise to the data; used by the optimizer.
    pub fn apply_update(&mut self, update: impl Fn(usize, f64) -> f64) {
        for (i, v) in self.data.iter_mut().enumerate() {
            *v = update(i, *v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_length_must_agree() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(TensorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rank_limits() {
        assert!(Tensor::zeros(vec![2, 2, 2]).is_ok());
        assert!(Tensor::zeros(vec![2, 2, 2, 2]).is_err());
        assert!(Tensor::zeros(vec![]).is_err());
        assert!(Tensor::zeros(vec![3, 0]).is_err());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        t.accumulate_grad(&[0.5, 0.5]).unwrap();
        t.accumulate_grad(&[1.0, -0.5]).unwrap();
        assert_eq!(t.grad().unwrap(), &[1.5, 0.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }
}
