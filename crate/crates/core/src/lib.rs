//! LSTM sentence autoencoders for semantic similarity.
//!
//! Trains sequence autoencoders in three loss configurations (plain
//! cross-entropy, CE + token-level KL divergence, and a neural-variational
//! objective with a Gaussian prior on the context vector), extracts fixed-size
//! sentence embeddings from the encoder's final hidden state, and scores them
//! against SICK/STS-style gold data with cosine similarity and Pearson
//! correlation.
//!
//! Everything runs on a small tape-based reverse-mode autodiff engine in
//! 64-bit floats; analytic gradients are verifiable against central finite
//! differences via [`tape::grad_check`].

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod lstm;
pub mod model;
pub mod objectives;
pub mod tape;
pub mod tensor;
pub mod train;

pub use corpus::{EmbeddingTable, SentencePairDataset, Vocabulary};
pub use error::{Error, Result};
pub use eval::{cosine, evaluate, pearson, EvalReport};
pub use lstm::{ContextVector, LstmParams, LstmState, ModelParams};
pub use model::Model;
pub use objectives::{LossConfig, LossVariant};
pub use tape::{grad_check, Tape, TensorId};
pub use tensor::Tensor;
pub use train::{train, EpochStats, TrainConfig};
