//! Dense `f64` tensors, reverse-mode differentiation, and the Adam optimizer.

mod adam;
pub mod conv;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{Adam, AdamParams};
pub use conv::Padding;
pub use gradcheck::{grad_check, grad_check_coords, GradCheckReport};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
