//! Answer-focused two-stage fine-tuning on a from-scratch tiny transformer.
//!
//! The crate is organised along the data path of an experiment:
//!
//! - [`corpus`]: synthetic chain-of-thought tasks, dataset files, the
//!   character vocabulary and the tagged target layout.
//! - [`model`]: a pre-layer-norm decoder-only transformer in `f64` with
//!   hand-written backpropagation and a binary checkpoint format.
//! - [`training`]: loss masks, masked negative log-likelihood, AdamW and the
//!   four training strategies (SFT, SFT-Tag, Key-Tag, SFTKey-Tag).
//! - [`eval`]: generation, format checking, answer extraction, matching and
//!   the accuracy/format composite score.
//! - [`judge`]: an optional chat-completion judge for semantic answer
//!   equivalence, with a replayable fixture transport.
//! - [`experiment`]: config-driven runs, manifests and comparison reports
//!   used by the `sftkey` binary.

pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod judge;
pub mod model;
pub mod training;

pub use corpus::{RawExample, TaggedExample, Vocabulary};
pub use model::{ModelConfig, ModelParams};
pub use training::{LossMask, Strategy, TrainPlan};

