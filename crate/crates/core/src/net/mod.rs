//! Tensors, reverse-mode autodiff and the recurrent pose/contact network.

pub mod gradcheck;
pub mod model;
pub mod params;
pub mod stream;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, Objective, TensorCheck};
pub use model::{
    encode, forward, forward_batch, gru_cell, record_forward, stack_windows, NetworkOutput, ParamVars,
};
pub use params::{
    checkpoint_bytes, file_digest, load_params, params_from_bytes, save_params, Dtype, NetDims,
    NetworkParams, ParamId,
};
pub use stream::StreamingEncoder;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Contact logits: two classes for each foot.
pub const CONTACT_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("tensor {name} has shape {got:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: [usize; 2],
        got: [usize; 2],
    },
    #[error("parameter tensor {0} contains a non-finite value")]
    NonFiniteParam(&'static str),
    #[error("backward called without a recorded forward pass")]
    BackwardWithoutForward,
    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("{0}")]
    Version(String),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("objective: {0}")]
    Objective(String),
    #[error("i/o: {0}")]
    Io(String),
}
