//! A small dense-tensor library with reverse-mode automatic differentiation.
//!
//! Values are `f64` throughout. A [`Tape`] records every operation in
//! execution order, so a single reverse sweep over the tape visits each node
//! once and yields gradients for every leaf that asked for them.
//!
//! Complex quantities are stored with a trailing axis of length 2 holding
//! the real and imaginary parts; [`Tape::complex_mul`] is the only operation
//! that interprets that axis.

mod error;
mod gemm;
mod params;
mod tape;
mod tensor;

pub mod check;
pub mod optim;

pub use error::{Result, TensorError};
pub use params::{Bound, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
