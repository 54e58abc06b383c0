//! Differentiable kernels, the twin encoder-decoder model, losses and the
//! optimizer.

mod gradcheck;
mod graph;
mod loss;
mod model;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, grad_check_sim, jitter_biases, GradCheckReport, MicroBatch};
pub use graph::{Gradients, Graph, ParamId, ParamStore, Var, LAYER_NORM_EPS};
pub use loss::{ce_loss, sim_loss, total_loss, SimLossValue, DEFAULT_LAMBDA};
pub use model::{
    greedy_decode_fn, images_to_tensor, positional_encoding, positional_encoding_2d, BatchLoss, Branch, DecoderParams,
    EncoderParams, ModelConfig, ModelState, Variant, Vocab, PAD,
};
pub use optim::{adadelta_step, Adadelta, AdadeltaConfig, AdadeltaSlot};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("sequence of length {len} exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("non-finite gradient for {param}[{index}]")]
    NonFiniteGradient { param: String, index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
