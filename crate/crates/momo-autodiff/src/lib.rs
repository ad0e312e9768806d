//! Reverse-mode automatic differentiation on a dynamic tape, in 64-bit floats.
//!
//! The engine is deliberately small: dense tensors, a closed set of recorded
//! operations (1-D convolution, padding, pooling, elementwise math, a few
//! reductions), exact analytic backward passes, and a bias-corrected Adam
//! optimizer. A [`Tape`] owns all values produced during a forward pass;
//! [`Var`] is a copyable handle into it. Gradients accumulate additively
//! across repeated [`Var::backward`] calls until [`Tape::zero_grad`].
//!
//! A tape and its variables are confined to one thread; independent tapes can
//! run on independent threads with no shared state.

mod adam;
mod check;
mod error;
mod kernels;
mod tape;
mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use check::{finite_diff_check, GradCheckReport};
pub use error::AutodiffError;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, AutodiffError>;
