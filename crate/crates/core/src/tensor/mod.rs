//! Dense double-precision tensors and a reverse-mode gradient tape.
//!
//! A [`Tensor`] is plain data: a shape, row-major values and a gradient
//! buffer of the same length. Computation happens on a [`Tape`], which
//! records every operation together with the information its backward
//! rule needs. [`Tape::backward`] replays those rules in reverse order of
//! execution, so the same tape always yields the same gradients.

mod gemm;
mod lstm;
mod tape;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {message}")]
    Shape { op: &'static str, message: String },
    #[error("{op}: value out of domain: {message}")]
    Domain { op: &'static str, message: String },
    #[error("index {index} out of range for {size} rows")]
    Index { index: usize, size: usize },
    #[error("{0}")]
    Contract(String),
}

/// Every kind of operation the tape can record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Mul,
    AddBias,
    Sigmoid,
    Tanh,
    MulConst,
    AddConst,
    Concat,
    Slice,
    GatherRows,
    SoftmaxRows,
    CrossEntropy,
    Sum,
    LstmRecurrence,
}

impl OpKind {
    pub const DIFFERENTIABLE: [OpKind; 16] = [
        OpKind::MatMul,
        OpKind::Transpose,
        OpKind::Add,
        OpKind::Mul,
        OpKind::AddBias,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::MulConst,
        OpKind::AddConst,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::GatherRows,
        OpKind::SoftmaxRows,
        OpKind::CrossEntropy,
        OpKind::Sum,
        OpKind::LstmRecurrence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::AddBias => "add_bias",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::MulConst => "mul_const",
            OpKind::AddConst => "add_const",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::GatherRows => "gather_rows",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::Sum => "sum",
            OpKind::LstmRecurrence => "lstm_recurrence",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::DIFFERENTIABLE
            .iter()
            .copied()
            .chain(std::iter::once(OpKind::Leaf))
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown op `{s}`"))
    }
}

/// Dense row-major array of `f64` with an accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        check_shape(&shape)?;
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(TensorError::Shape {
                op: "tensor",
                message: format!(
                    "shape {shape:?} holds {numel} values but {} were given",
                    values.len()
                ),
            });
        }
        Ok(Tensor {
            grad: vec![0.0; numel],
            shape,
            values,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value]).expect("scalar shape is valid")
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Shape {
                op: "from_rows",
                message: "ragged rows".into(),
            });
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    /// Marks the tensor as a trainable leaf.
    pub fn with_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Rows and columns when viewed as a matrix; rank-1 tensors are one row.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        matrix_dims(&self.shape)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::Shape {
            op: "tensor",
            message: format!("shape {shape:?} must have positive extents"),
        });
    }
    Ok(())
}

pub(crate) fn matrix_dims(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [n] => Some((1, n)),
        [m, n] => Some((m, n)),
        _ => None,
    }
}
