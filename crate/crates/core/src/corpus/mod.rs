//! Chain-of-thought corpora and the tagged target layout.
//!
//! A [`RawExample`] is a prompt / thinking / answer triple. [`reconstruct`]
//! turns it into a [`TaggedExample`] whose target is
//!
//! ```text
//! <Thinking> thinking... </Thinking> <Answer> answer... </Answer> EOS
//! ```
//!
//! with each tag a single vocabulary id, and also keeps the plain
//! `thinking ++ answer ++ EOS` target used by the untagged baseline.

mod dataset;
mod synth;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_dataset, save_dataset};
pub use synth::{generate_corpus, Corpus, SyntheticTaskSpec, TaskKind, SYSTEM_INSTRUCTION};
pub use vocab::{
    Special, Token, TokenId, Vocabulary, ANSWER_CLOSE, ANSWER_OPEN, BOS_LITERAL, EOS_LITERAL,
    PAD_LITERAL, TAG_LITERALS, THINK_CLOSE, THINK_OPEN,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown symbol {symbol:?} at character offset {offset}")]
    UnknownSymbol { symbol: char, offset: usize },
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    IdOutOfRange { id: TokenId, vocab_size: usize },
    #[error("{field} contains the reserved tag literal {tag}")]
    TagLiteral { field: &'static str, tag: &'static str },
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("requested {requested} distinct examples but the task only has {capacity}")]
    Capacity { requested: u64, capacity: u64 },
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One prompt / thinking / answer triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub prompt: String,
    pub thinking: String,
    pub answer: String,
}

impl RawExample {
    pub fn new(
        prompt: impl Into<String>,
        thinking: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let ex = Self {
            prompt: prompt.into(),
            thinking: thinking.into(),
            answer: answer.into(),
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.answer.is_empty() {
            return Err(CorpusError::EmptyAnswer);
        }
        for (field, text) in [("thinking", &self.thinking), ("answer", &self.answer)] {
            if let Some(tag) = TAG_LITERALS.iter().find(|t| text.contains(*t)) {
                return Err(CorpusError::TagLiteral { field, tag });
            }
        }
        Ok(())
    }
}

/// A tokenized example with the answer-span boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedExample {
    /// `BOS` followed by the prompt characters.
    pub prompt_ids: Vec<TokenId>,
    /// Tagged response plus trailing `EOS`.
    pub target_ids: Vec<TokenId>,
    /// Index of `</Thinking>` in `target_ids`.
    pub boundary: usize,
    /// Thinking and answer characters plus `EOS`, no tags.
    pub untagged_target_ids: Vec<TokenId>,
    /// Index of the first answer token in `untagged_target_ids`.
    pub untagged_answer_start: usize,
}

/// Which target layout a strategy trains and evaluates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetFormat {
    Tagged,
    Untagged,
}

impl TaggedExample {
    pub fn target(&self, format: TargetFormat) -> &[TokenId] {
        match format {
            TargetFormat::Tagged => &self.target_ids,
            TargetFormat::Untagged => &self.untagged_target_ids,
        }
    }

    /// First target position of the answer span for `format`.
    pub fn answer_start(&self, format: TargetFormat) -> usize {
        match format {
            TargetFormat::Tagged => self.boundary + 1,
            TargetFormat::Untagged => self.untagged_answer_start,
        }
    }

    /// Model input for teacher forcing: prompt followed by every target token
    /// but the last. Logit row `prompt_ids.len() - 1 + t` predicts target `t`.
    pub fn input_ids(&self, format: TargetFormat) -> Vec<TokenId> {
        let target = self.target(format);
        let mut ids = Vec::with_capacity(self.prompt_ids.len() + target.len() - 1);
        ids.extend_from_slice(&self.prompt_ids);
        ids.extend_from_slice(&target[..target.len() - 1]);
        ids
    }

    pub fn sequence_len(&self, format: TargetFormat) -> usize {
        self.prompt_ids.len() + self.target(format).len() - 1
    }
}

/// Splits a raw example into the tagged layout.
pub fn reconstruct(example: &RawExample, vocab: &Vocabulary) -> Result<TaggedExample, CorpusError> {
    example.validate()?;
    let think = vocab.tokenize(&example.thinking)?;
    let answer = vocab.tokenize(&example.answer)?;

    let mut prompt_ids = vec![vocab.id(Special::Bos)];
    prompt_ids.extend(vocab.tokenize(&example.prompt)?);

    let mut target_ids = Vec::with_capacity(think.len() + answer.len() + 5);
    target_ids.push(vocab.id(Special::ThinkOpen));
    target_ids.extend_from_slice(&think);
    let boundary = target_ids.len();
    target_ids.push(vocab.id(Special::ThinkClose));
    target_ids.push(vocab.id(Special::AnswerOpen));
    target_ids.extend_from_slice(&answer);
    target_ids.push(vocab.id(Special::AnswerClose));
    target_ids.push(vocab.id(Special::Eos));

    let mut untagged_target_ids = think.clone();
    untagged_target_ids.extend_from_slice(&answer);
    untagged_target_ids.push(vocab.id(Special::Eos));

    Ok(TaggedExample {
        prompt_ids,
        target_ids,
        boundary,
        untagged_target_ids,
        untagged_answer_start: think.len(),
    })
}

pub fn reconstruct_all(
    examples: &[RawExample],
    vocab: &Vocabulary,
) -> Result<Vec<TaggedExample>, CorpusError> {
    examples.iter().map(|e| reconstruct(e, vocab)).collect()
}
