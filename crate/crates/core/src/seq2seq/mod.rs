//! Transformer encoder-decoder: pre-training, fine-tuning and decoding.
//!
//! The network is a pre-norm encoder-decoder with sinusoidal positions, a
//! causal decoder and, by default, one embedding matrix shared by the
//! encoder input, decoder input and output layer. Gradients are computed by
//! hand-written backpropagation. Training runs in `f32`; every routine is
//! generic over the scalar so that `f64` can be used for gradient checks.

mod batch;
mod checkpoint;
mod config;
mod decode;
pub mod linalg;
mod model;
mod optim;
mod params;
mod train;

use thiserror::Error;

pub use batch::{make_mass_batches, make_pretrain_batches, shuffled_batches, Batch, PretrainMode, Seq2SeqExample};
pub use checkpoint::{TransformerCheckpoint, CHECKPOINT_VERSION};
pub use config::TransformerConfig;
pub use decode::{
    beam_decode, decode_source, greedy_decode, hypothesis_order, sequence_log_prob, CacheState, Hypothesis,
    IncrementalDecoder, StepScorer,
};
pub use linalg::Real;
pub use model::{ForwardOutput, Logits, Transformer};
pub use optim::{learning_rate, OptimizerState, Schedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{ParamLayout, TensorSpec};
pub use train::{finetune, select_checkpoint, train, train_step, StepStats, TrainConfig};

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("parameter vector has {got} values, the configuration needs {expected}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
