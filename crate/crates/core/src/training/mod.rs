//! Masked losses, the optimizer and the four training strategies.
//!
//! | strategy     | targets  | stages                                   |
//! |--------------|----------|------------------------------------------|
//! | `SFT`        | untagged | full response                            |
//! | `SFT-Tag`    | tagged   | full response                            |
//! | `Key-Tag`    | tagged   | answer span only                         |
//! | `SFTKey-Tag` | tagged   | full response, then answer span only     |
//!
//! The second `SFTKey-Tag` stage starts from the exact parameters the first
//! stage ended with. Every stage restarts its learning-rate schedule and
//! optimizer state.

mod log;
mod loss;
mod mask;
mod optim;
mod stage;
mod strategy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TargetFormat;
use crate::model::ModelError;

pub use log::{EpochSnapshot, StepRecord, TrainLog};
pub use loss::{
    batch_loss, masked_nll, masked_out_contribution, mean_masked_nll, position_losses, BatchItem,
    BatchStats,
};
pub use mask::{answer_span_mask, build_mask, LossMask, MaskScope};
pub use optim::{adamw_update, clip_grad_norm, AdamW, AdamWConfig, LinearSchedule};
pub use stage::{train_stage, StageContext};
pub use strategy::{run_strategy, run_strategy_reusing, StageResult, StrategyOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss mask has no supervised position")]
    ZeroMask,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("invalid training plan: {0}")]
    InvalidPlan(String),
    #[error("non-finite loss at stage {stage}, step {step}, examples {examples:?}")]
    NonFinite {
        stage: usize,
        step: usize,
        examples: Vec<usize>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "SFT")]
    Sft,
    #[serde(rename = "SFT-Tag")]
    SftTag,
    #[serde(rename = "Key-Tag")]
    KeyTag,
    #[serde(rename = "SFTKey-Tag")]
    SftKeyTag,
}

/// Target layout and loss scope of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub format: TargetFormat,
    pub scope: MaskScope,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Sft,
        Strategy::SftTag,
        Strategy::KeyTag,
        Strategy::SftKeyTag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Sft => "SFT",
            Strategy::SftTag => "SFT-Tag",
            Strategy::KeyTag => "Key-Tag",
            Strategy::SftKeyTag => "SFTKey-Tag",
        }
    }

    pub fn format(self) -> TargetFormat {
        match self {
            Strategy::Sft => TargetFormat::Untagged,
            _ => TargetFormat::Tagged,
        }
    }

    pub fn stages(self) -> Vec<StageSpec> {
        let full = |format| StageSpec {
            format,
            scope: MaskScope::FullResponse,
        };
        let answer = StageSpec {
            format: TargetFormat::Tagged,
            scope: MaskScope::AnswerOnly,
        };
        match self {
            Strategy::Sft => vec![full(TargetFormat::Untagged)],
            Strategy::SftTag => vec![full(TargetFormat::Tagged)],
            Strategy::KeyTag => vec![answer],
            Strategy::SftKeyTag => vec![full(TargetFormat::Tagged), answer],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| TrainError::InvalidPlan(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageHyperparams {
    pub learning_rate: f64,
    /// Fraction of the stage's total steps spent in linear warmup.
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for StageHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            // half an epoch out of three
            warmup_fraction: 0.5 / 3.0,
            weight_decay: 0.1,
            epochs: 3,
            batch_size: 32,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl StageHyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidPlan(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup fraction must be in [0, 1), got {}", self.warmup_fraction));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.weight_decay < 0.0 || self.clip_norm < 0.0 {
            return bad("weight decay and clip norm must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub strategy: Strategy,
    /// One entry per stage of the strategy.
    pub stages: Vec<StageHyperparams>,
}

impl TrainPlan {
    /// Same hyperparameters for every stage.
    pub fn uniform(strategy: Strategy, hyper: StageHyperparams) -> Self {
        Self {
            strategy,
            stages: vec![hyper; strategy.stages().len()],
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let expected = self.strategy.stages().len();
        if self.stages.len() != expected {
            return Err(TrainError::InvalidPlan(format!(
                "{} needs {expected} stage(s), plan has {}",
                self.strategy,
                self.stages.len()
            )));
        }
        self.stages.iter().try_for_each(StageHyperparams::validate)
    }
}
