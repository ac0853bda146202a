use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::training::{StageHyperparams, StageSpec, Strategy};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn file_sha256(path: &Path) -> Result<String, ExperimentError> {
    let bytes = std::fs::read(path).map_err(|e| ExperimentError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Metadata written next to every stage checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSidecar {
    pub config_hash: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub stage: usize,
    pub spec: StageSpec,
    pub hyper: StageHyperparams,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
}

/// Record of one (strategy, seed) run. Paths are relative to the run
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub strategy: Strategy,
    pub seed: u64,
    /// False while training or evaluation is still writing files.
    pub complete: bool,
    pub checkpoints: Vec<String>,
    pub train_log: Option<String>,
    pub epoch_log: Option<String>,
    pub eval_report: Option<String>,
    pub eval_judgments: Option<String>,
    pub train_seconds: Option<f64>,
    pub eval_seconds: Option<f64>,
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn new(config_hash: &str, strategy: Strategy, seed: u64) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            code_version: CODE_VERSION.to_string(),
            strategy,
            seed,
            complete: false,
            checkpoints: Vec::new(),
            train_log: None,
            epoch_log: None,
            eval_report: None,
            eval_judgments: None,
            train_seconds: None,
            eval_seconds: None,
            files: BTreeMap::new(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self, ExperimentError> {
        let path = run_dir.join(Self::FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), ExperimentError> {
        let path = run_dir.join(Self::FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))
    }

    /// Hashes `rel` inside `run_dir` and records it.
    pub fn track(&mut self, run_dir: &Path, rel: &str) -> Result<(), ExperimentError> {
        let hash = file_sha256(&run_dir.join(rel))?;
        self.files.insert(rel.to_string(), hash);
        Ok(())
    }

    pub fn final_checkpoint(&self) -> Option<&str> {
        self.checkpoints.last().map(String::as_str)
    }

    /// Every tracked file exists and still has its recorded hash.
    pub fn verify(&self, run_dir: &Path) -> Result<(), ExperimentError> {
        for (rel, expected) in &self.files {
            let actual = file_sha256(&run_dir.join(rel))?;
            if &actual != expected {
                return Err(ExperimentError::Data(format!("{rel}: hash mismatch")));
            }
        }
        let named = self
            .checkpoints
            .iter()
            .chain(&self.train_log)
            .chain(&self.epoch_log)
            .chain(&self.eval_report)
            .chain(&self.eval_judgments);
        for rel in named {
            if !self.files.contains_key(rel) {
                return Err(ExperimentError::Data(format!("{rel}: not tracked")));
            }
        }
        Ok(())
    }
}
