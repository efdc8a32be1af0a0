//! 1D CNN primitives with hand-written forward and backward passes.

pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;

pub use layers::{
    bias_grad, cross_entropy, leaky_relu, leaky_relu_backward, maxpool1d_backward, maxpool1d_forward, softmax,
    softmax_ce_grad, weight_grad, Conv1d, Linear,
};
pub use model::{accuracy, ActivationCache, ClientGrads, ClientModel, ModelParams, ModelVariant, ServerModel};
pub use optim::{sgd_step, AdamState};
pub use tensor::Tensor;

pub const LEAKY_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in tensor")]
    NonFinite,
    #[error("invalid state: {0}")]
    State(String),
}
