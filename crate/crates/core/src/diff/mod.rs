//! Minimal reverse-mode automatic differentiation over `batch × feature`
//! arrays.
//!
//! A [`Tape`] records every primitive as it is evaluated. Values live on the
//! tape; callers hold [`Var`] handles. Learnable state lives outside the tape
//! in [`Param`]s, which are bound into a tape per forward pass and collect
//! their gradient after [`Tape::backward`].
//!
//! Subgradient conventions: `relu'(0) = 0`, and `max_last` sends the whole
//! upstream gradient to the lowest index among tied maxima.

mod gemm;
pub mod gradcheck;
mod optim;
mod param;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{finite_difference_report, grad_check, GradCheckReport};
pub use optim::Adam;
pub use param::{Param, ParamId};
pub use tape::{Tape, Var};
pub use tensor::{Shape, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("tensor dimensions must be positive, got [{rows}, {cols}]")]
    EmptyShape { rows: usize, cols: usize },
    #[error("data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("expected a scalar, got shape {shape}")]
    NotScalar { shape: Shape },
    #[error("backward already ran on this tape; record a new forward pass")]
    BackwardTwice,
    #[error("cannot record new operations after backward")]
    TapeConsumed,
    #[error("concat needs at least one input")]
    EmptyConcat,
    #[error("finite-difference step {step} outside [1e-7, 1e-4]")]
    InvalidStep { step: f64 },
}
