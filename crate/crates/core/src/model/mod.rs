//! Tiny pre-layer-norm decoder-only transformer in double precision.
//!
//! Learned positional embeddings, multi-head causal self-attention, a GELU
//! feed-forward block and an untied unembedding. No dropout. Gradients are
//! computed by hand in [`transformer`] and checked against central finite
//! differences in the test suite.

mod checkpoint;
mod params;
pub mod transformer;

use thiserror::Error;

use crate::corpus::TokenId;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use params::{LayerParams, ModelConfig, ModelParams, NormParams, TensorKind, TensorMut, TensorRef};
pub use transformer::{
    backward, backward_segment, forward, forward_segment, log_softmax, Decoder, ForwardTrace,
    KvCache, LayerKv,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    IdOutOfVocab { id: TokenId, vocab_size: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
