//! Dense `f64` tensors with tape-based reverse-mode differentiation.

pub mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{check_gradient, compare_gradients, value_and_grad, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
