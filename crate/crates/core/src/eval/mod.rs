//! Generation, format adherence, answer extraction and scoring.
//!
//! `Score = alpha * Acc + (1 - alpha) * Fmt`, with `alpha = 0.7` unless
//! configured otherwise. `Fmt` is purely structural: an empty answer span is
//! well-formed but never correct.

mod format;
mod generate;
mod report;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::ModelError;
use crate::training::TrainError;

pub use format::{check_format, extract_answer, local_match, normalize_answer};
pub use generate::{generate, Decoding, GenerationSettings, SharedPrefix};
pub use report::{
    evaluate, format_improvement, question_text, relative_improvement, render_output, score,
    EvalOptions, EvalReport, EvalSet, JudgeSource, Judgment, LocalMatcher, MatchOutcome, MatchRequest, Matcher,
    DEFAULT_ALPHA,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyDataset,
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("prompt of length {len} exceeds max_seq_len {max}")]
    PromptTooLong { len: usize, max: usize },
    #[error("baseline score must be positive")]
    ZeroBaseline,
    #[error("report error: {0}")]
    Report(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
