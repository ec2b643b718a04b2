//! Reverse-mode automatic differentiation over whole tensors.

pub(crate) mod kernels;
mod tape;
mod tensor;

pub use kernels::ConvGeom;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
