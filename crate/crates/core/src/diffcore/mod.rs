//! Minimal reverse-mode differentiation over dense matrices.

mod graph;
mod params;
mod scalar;
mod tensor;

pub use graph::{softmax_rows, Graph, NodeId, LOG_EPS};
pub(crate) use graph::{cross_entropy_value, huber_value};
pub use params::{GradSet, ParamId, ParamSet};
pub(crate) use scalar::gemm;
pub use scalar::Real;
pub use tensor::Tensor;
