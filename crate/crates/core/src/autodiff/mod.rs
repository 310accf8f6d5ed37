//! Dense tensors with reverse-mode differentiation and a finite-difference
//! gradient checker.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Axis, Graph, Var, MASK_VALUE};
pub use tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("slice {start}..{} out of range for shape {shape:?}", start + len)]
    Slice {
        shape: Vec<usize>,
        start: usize,
        len: usize,
    },
    #[error("index {index} out of range for {len} entries")]
    Index { index: usize, len: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("softmax row {row} is entirely masked; keep at least one valid position")]
    MaskedRow { row: usize },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value at {at}")]
    NonFinite { at: String },
    #[error("eps {0} outside [1e-6, 1e-4]")]
    InvalidEps(f64),
}

impl AutodiffError {
    pub(crate) fn shapes(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        AutodiffError::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
