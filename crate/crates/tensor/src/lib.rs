//! Minimal dense-tensor reverse-mode autodiff engine.
//!
//! Everything is generic over the [`Scalar`] float type; training code uses
//! the 64-bit aliases below, file payloads are written as 32-bit.

mod checkpoint;
mod error;
mod gradcheck;
mod graph;
pub mod kernels;
mod optim;
mod scalar;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use gradcheck::{central_difference, grad_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use graph::{Bindings, Evaluation, Gradients, Graph, Node, NodeId, Op};
pub use optim::{Method, Optimizer, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Concrete 64-bit aliases used throughout training.
pub type Tensor64 = Tensor<f64>;
pub type Graph64 = Graph<f64>;
pub type Bindings64 = Bindings<f64>;
pub type ParamStore64 = ParamStore<f64>;
pub type Optimizer64 = Optimizer<f64>;
pub type Checkpoint64 = Checkpoint<f64>;

/// 32-bit aliases for callers that stay in file precision.
pub type Tensor32 = Tensor<f32>;
pub type Graph32 = Graph<f32>;
