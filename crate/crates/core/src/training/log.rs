use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// One optimizer step. `stage` and `epoch` are 1-based, `step` is 0-based and
/// counts within the stage. Losses are taken before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: usize,
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_answer: f64,
}

/// Held-out answer-level NLL after a finished epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSnapshot {
    pub stage: usize,
    pub epoch: usize,
    /// Steps taken in the stage so far.
    pub steps: usize,
    pub train_loss_mean: f64,
    pub eval_answer_nll: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochSnapshot>,
}

impl TrainLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stages(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.steps.iter().map(|r| r.stage).collect();
        out.dedup();
        out
    }

    pub fn stage_steps(&self, stage: usize) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(move |r| r.stage == stage)
    }

    pub fn stage_epochs(&self, stage: usize) -> impl Iterator<Item = &EpochSnapshot> {
        self.epochs.iter().filter(move |r| r.stage == stage)
    }

    /// Checks that steps strictly increase within every stage.
    pub fn validate(&self) -> Result<(), String> {
        for pair in self.steps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.stage == b.stage && b.step <= a.step {
                return Err(format!("stage {} step {} follows step {}", a.stage, b.step, a.step));
            }
            if b.stage < a.stage {
                return Err(format!("stage {} follows stage {}", b.stage, a.stage));
            }
        }
        Ok(())
    }

    /// Steps as CSV with header `stage,step,epoch,lr,loss_total,loss_answer`.
    pub fn steps_csv(&self) -> Result<String, TrainError> {
        to_csv(&self.steps)
    }

    pub fn epochs_csv(&self) -> Result<String, TrainError> {
        to_csv(&self.epochs)
    }

    pub fn parse_steps_csv(text: &str) -> Result<Vec<StepRecord>, TrainError> {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| TrainError::InvalidPlan(format!("bad train log csv: {e}")))
    }

    pub fn parse_epochs_csv(text: &str) -> Result<Vec<EpochSnapshot>, TrainError> {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| TrainError::InvalidPlan(format!("bad epoch log csv: {e}")))
    }

    pub fn read_csv(steps_path: &Path, epochs_path: &Path) -> std::io::Result<Self> {
        let conv = |e: TrainError| std::io::Error::other(e.to_string());
        Ok(Self {
            steps: Self::parse_steps_csv(&std::fs::read_to_string(steps_path)?).map_err(conv)?,
            epochs: Self::parse_epochs_csv(&std::fs::read_to_string(epochs_path)?).map_err(conv)?,
        })
    }

    pub fn write_csv(&self, steps_path: &Path, epochs_path: &Path) -> std::io::Result<()> {
        let conv = |e: TrainError| std::io::Error::other(e.to_string());
        std::fs::write(steps_path, self.steps_csv().map_err(conv)?)?;
        std::fs::write(epochs_path, self.epochs_csv().map_err(conv)?)
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, TrainError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| TrainError::InvalidPlan(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| TrainError::InvalidPlan(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
