//! Dense `f64` tensors, a define-by-run reverse-mode graph, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod check;
mod graph;
mod mlp;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use check::{gradient_check, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use mlp::Mlp;
pub use params::{Param, ParamSet};
pub use tensor::Tensor;
