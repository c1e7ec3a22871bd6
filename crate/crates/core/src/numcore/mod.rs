//! Tensor algebra, reverse-mode autodiff, seeded RNG and gradient checking.

mod backend;
mod gradcheck;
mod graph;
pub mod kernels;
mod rng;
mod tensor;

pub use backend::{Backend, Eval};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use rng::{randn, Rng, RngState};
pub use tensor::{Scalar, Tensor, SCALAR_BYTES};
