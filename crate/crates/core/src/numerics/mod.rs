//! Dense tensors, reverse-mode differentiation and first-order optimizers.

pub mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use graph::{log_softmax_rows, softmax_rows, Gradients, Graph, NodeId, Op};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::Tensor;
