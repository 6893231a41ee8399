//! Dense tensor arithmetic with reverse-mode differentiation, weight
//! normalization, Adam, gradient verification, and the project-wide
//! deterministic PRNG.

mod adam;
mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_smooth_regions, relative_error, GradCheckReport};
pub use rng::{categorical, derive_seed, Rng};
pub use tape::{Tape, Var};
pub use tensor::{
    add, add_row_broadcast, matmul, matmul_nt, matmul_tn, mul, softmax_rows, Tensor,
};

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index {index} out of range for bound {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("weight-norm row {row} has zero norm")]
    ZeroNormRow { row: usize },
    #[error("empty probability vector")]
    EmptyDistribution,
    #[error("invalid probability vector: {reason}")]
    InvalidDistribution { reason: String },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}
