//! Reverse-mode automatic differentiation over small dense tensors, plus the
//! MLP/GRU building blocks and the Adam optimizer.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod nn;
mod params;
mod scalar;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, EntryHeader};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{softmax, Graph, Var};
pub use nn::{Activation, Gru, Linear, Mlp};
pub use params::{Gradients, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum GradError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("dimension mismatch at layer {layer}: expected {expected} inputs, got {got}")]
    Dimension {
        layer: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite gradient for parameter {name}")]
    NonFinite { name: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
