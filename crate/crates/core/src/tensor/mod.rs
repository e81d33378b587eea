//! Dense f64 tensors and a tape-based reverse-mode differentiation engine.
//!
//! Every forward primitive records itself on a [`Tape`]; [`Tape::backward`]
//! replays the record in reverse and routes gradients to the named
//! parameters of a [`ParameterSet`].

mod checkpoint;
mod gru;
mod ops;
mod params;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use gru::{bidirectional_gru, gru_cell, gru_sequence, GruWeights};
pub use ops::Padding;
pub use params::{glorot_uniform, sgd_step, Gradients, ParameterSet, Partition};
pub use tape::{Tape, Var};

use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op}: degenerate input ({detail})")]
    Degenerate { op: &'static str, detail: String },
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major dense tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// 2-D tensor from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::ShapeMismatch {
                op: "from_rows",
                detail: "ragged rows".into(),
            });
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let cols = self.shape.get(1).copied().unwrap_or(1).max(1);
        self.data.chunks(cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {shape:?}", self.shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        let head = &self.data[..self.data.len().min(SHOWN)];
        write!(f, " {head:?}")?;
        if self.data.len() > SHOWN {
            write!(f, " .. ({} values)", self.data.len())?;
        }
        Ok(())
    }
}
