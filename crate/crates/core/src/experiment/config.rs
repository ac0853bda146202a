use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::corpus::{SyntheticTaskSpec, Vocabulary};
use crate::eval::GenerationSettings;
use crate::judge::JudgeConfig;
use crate::model::ModelConfig;
use crate::training::{StageHyperparams, Strategy, TrainPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub stage1: StageHyperparams,
    /// Second-stage hyperparameters; defaults to a copy of `stage1`.
    pub stage2: Option<StageHyperparams>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            stage1: StageHyperparams::default(),
            stage2: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatcherKind {
    Local,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub alpha: f64,
    pub generation: GenerationSettings,
    pub matcher: MatcherKind,
    /// Canned judge replies; when set the judge never touches the network.
    pub judge_fixture: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alpha: crate::eval::DEFAULT_ALPHA,
            generation: GenerationSettings::default(),
            matcher: MatcherKind::Local,
            judge_fixture: None,
        }
    }
}

/// One experiment: data, model, per-strategy plans, evaluation and seeds.
/// Each run seed initializes the model and drives the data order; the task
/// has its own seed so every run sees the same corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub task: SyntheticTaskSpec,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub judge: JudgeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seeds: vec![1],
            strategies: Strategy::ALL.to_vec(),
            task: SyntheticTaskSpec::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            judge: JudgeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let usage = |m: String| Err(ExperimentError::Usage(m));
        if self.strategies.is_empty() {
            return usage("at least one strategy is required".into());
        }
        if self.seeds.is_empty() {
            return usage("at least one seed is required".into());
        }
        let vocab = Vocabulary::standard().len();
        if self.model.vocab_size != vocab {
            return usage(format!("model.vocab_size must be {vocab}, got {}", self.model.vocab_size));
        }
        self.model.validate().map_err(|e| ExperimentError::Usage(e.to_string()))?;
        self.task.validate().map_err(|e| ExperimentError::Usage(e.to_string()))?;
        for s in &self.strategies {
            self.plan(*s, 0).validate().map_err(|e| ExperimentError::Usage(e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.eval.alpha) {
            return usage(format!("eval.alpha must be in [0, 1], got {}", self.eval.alpha));
        }
        self.eval
            .generation
            .validate()
            .map_err(|e| ExperimentError::Usage(e.to_string()))?;
        Ok(())
    }

    /// Training plan of `strategy` for one run seed.
    pub fn plan(&self, strategy: Strategy, seed: u64) -> TrainPlan {
        let first = StageHyperparams {
            seed,
            ..self.training.stage1.clone()
        };
        let second = StageHyperparams {
            seed,
            ..self.training.stage2.clone().unwrap_or_else(|| self.training.stage1.clone())
        };
        let stages = match strategy.stages().len() {
            1 => vec![first],
            _ => vec![first, second],
        };
        TrainPlan { strategy, stages }
    }

    pub fn model_for_seed(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            init_seed: seed,
            ..self.model.clone()
        }
    }

    /// Hash of the settings that determine the data and the checkpoints:
    /// task, model and training. Seeds and strategies name run directories
    /// below it, and evaluation settings only affect files that a new
    /// evaluation overwrites.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&(&self.task, &self.model, &self.training)).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}
