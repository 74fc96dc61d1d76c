//! Dense `f64` tensors with a reverse-mode gradient tape.

pub mod alloc;
mod graph;
pub mod gradcheck;
pub mod kernels;
mod param;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, grad_check_with_floor, Coverage, GradCheckReport, DEFAULT_FLOOR};
pub use graph::{BinaryKind, Gradients, Graph, Reduction, Var};
pub use param::{glorot_uniform, he_normal_kernel, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract error: {0}")]
    Contract(String),
}
