//! Config-driven runs behind the `sftkey` binary.
//!
//! Layout under `output_dir/<config hash>/`:
//!
//! ```text
//! config.toml
//! data/train.jsonl, data/eval.jsonl
//! <strategy>/<seed>/manifest.json
//! <strategy>/<seed>/stage1.ckpt, stage1.json, [stage2.ckpt, stage2.json]
//! <strategy>/<seed>/train_log.csv, epochs.csv
//! <strategy>/<seed>/eval/report.json, eval/judgments.csv
//! report/summary.md, report/summary.csv, report/curves.csv, report/eval_curves.csv
//! ```

mod config;
mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::corpus::{generate_corpus, load_dataset, reconstruct_all, save_dataset, CorpusError, TaggedExample, Vocabulary};
use crate::eval::{evaluate, EvalError, EvalOptions, EvalReport, EvalSet, Judgment, LocalMatcher, Matcher};
use crate::judge::{FixtureTransport, Judge, JudgeError, JudgeMatcher};
use crate::model::{load_checkpoint, save_checkpoint, ModelParams};
use crate::training::{
    run_strategy, run_strategy_reusing, StageResult, StepRecord, Strategy, StrategyOutcome, TrainError, TrainLog,
};

pub use config::{EvalConfig, ExperimentConfig, MatcherKind, TrainingConfig};
pub use manifest::{file_sha256, RunManifest, StageSidecar, CODE_VERSION};
pub use report::{CurvePoint, EvalCurvePoint, ExperimentReport, ReportRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("judge: {0}")]
    Judge(String),
}

impl ExperimentError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        ExperimentError::Data(format!("{}: {e}", path.display()))
    }

    /// Process exit code: 1 usage, 2 data, 3 training, 4 evaluation, 5 judge.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) => 1,
            ExperimentError::Data(_) => 2,
            ExperimentError::Divergence(_) | ExperimentError::Training(_) => 3,
            ExperimentError::Eval(_) => 4,
            ExperimentError::Judge(_) => 5,
        }
    }
}

impl From<CorpusError> for ExperimentError {
    fn from(e: CorpusError) -> Self {
        ExperimentError::Data(e.to_string())
    }
}

impl From<TrainError> for ExperimentError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => ExperimentError::Divergence(e.to_string()),
            TrainError::InvalidPlan(_) => ExperimentError::Usage(e.to_string()),
            _ => ExperimentError::Training(e.to_string()),
        }
    }
}

impl From<EvalError> for ExperimentError {
    fn from(e: EvalError) -> Self {
        ExperimentError::Eval(e.to_string())
    }
}

impl From<JudgeError> for ExperimentError {
    fn from(e: JudgeError) -> Self {
        ExperimentError::Judge(e.to_string())
    }
}

/// Summary of a `gen-data` call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSummary {
    pub train_path: PathBuf,
    pub eval_path: PathBuf,
    pub train_count: usize,
    pub eval_count: usize,
    /// Prompts present in both splits.
    pub collisions: usize,
}

/// Progress callbacks used by the command-line front end.
#[derive(Default)]
pub struct Progress<'a> {
    pub on_step: Option<&'a dyn Fn(Strategy, u64, &StepRecord)>,
    pub on_judgment: Option<&'a dyn Fn(&Judgment)>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    hash: String,
    root: PathBuf,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let hash = config.hash();
        let root = config.output_dir.join(&hash);
        Ok(Self { config, hash, root })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, strategy: Strategy, seed: u64) -> PathBuf {
        self.root.join(strategy.name()).join(seed.to_string())
    }

    fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    fn mkdir(path: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(path).map_err(|e| ExperimentError::io(path, e))
    }

    fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
        std::fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
    }

    /// Writes the train and eval splits plus a copy of the config.
    pub fn gen_data(&self) -> Result<DataSummary, ExperimentError> {
        let corpus = generate_corpus(&self.config.task)?;
        let dir = self.data_dir();
        Self::mkdir(&dir)?;
        Self::write(&self.root.join("config.toml"), self.config.to_toml())?;
        let train_path = dir.join("train.jsonl");
        let eval_path = dir.join("eval.jsonl");
        save_dataset(&train_path, &corpus.train)?;
        save_dataset(&eval_path, &corpus.eval)?;
        let train_prompts: std::collections::HashSet<&str> =
            corpus.train.iter().map(|r| r.prompt.as_str()).collect();
        let collisions = corpus.eval.iter().filter(|r| train_prompts.contains(r.prompt.as_str())).count();
        Ok(DataSummary {
            train_path,
            eval_path,
            train_count: corpus.train.len(),
            eval_count: corpus.eval.len(),
            collisions,
        })
    }

    fn load_split(&self, name: &str) -> Result<Vec<crate::corpus::RawExample>, ExperimentError> {
        let path = self.data_dir().join(name);
        if !path.exists() {
            return Err(ExperimentError::Data(format!(
                "{} is missing; run gen-data first",
                path.display()
            )));
        }
        Ok(load_dataset(&path)?)
    }

    pub fn load_train(&self) -> Result<Vec<TaggedExample>, ExperimentError> {
        let raw = self.load_split("train.jsonl")?;
        Ok(reconstruct_all(&raw, &Vocabulary::standard())?)
    }

    pub fn load_eval(&self) -> Result<EvalSet, ExperimentError> {
        let raw = self.load_split("eval.jsonl")?;
        Ok(EvalSet::new(raw, &Vocabulary::standard())?)
    }

    /// Trains every requested (strategy, seed) pair. `SFTKey-Tag` continues
    /// from the matching `SFT-Tag` run when one is available in memory or on
    /// disk, since its first stage is the same computation.
    pub fn train(
        &self,
        strategies: &[Strategy],
        seeds: &[u64],
        progress: &Progress<'_>,
    ) -> Result<Vec<RunManifest>, ExperimentError> {
        let train = self.load_train()?;
        let eval = self.load_eval()?;
        let mut manifests = Vec::new();
        for &seed in seeds {
            let mut sft_tag: Option<StrategyOutcome> = None;
            // SFT-Tag first so SFTKey-Tag can pick it up
            let mut order: Vec<Strategy> = strategies.to_vec();
            order.sort_by_key(|s| Strategy::ALL.iter().position(|x| x == s));
            order.dedup();
            for strategy in order {
                let started = Instant::now();
                let plan = self.config.plan(strategy, seed);
                let hook = |r: &StepRecord| {
                    if let Some(f) = progress.on_step {
                        f(strategy, seed, r)
                    }
                };
                let dir = self.run_dir(strategy, seed);
                Self::mkdir(&dir)?;
                let mut manifest = RunManifest::new(&self.hash, strategy, seed);
                manifest.save(&dir)?;

                let reusable = match (strategy, &sft_tag) {
                    (Strategy::SftKeyTag, Some(o)) => Some(o.clone()),
                    (Strategy::SftKeyTag, None) => self.load_outcome(Strategy::SftTag, seed).ok(),
                    _ => None,
                };
                let outcome = match reusable {
                    Some(first) if first.plan.stages[0] == plan.stages[0] => {
                        run_strategy_reusing(&plan, &first, &train, Some(&eval.tagged), Some(&hook))?
                    }
                    _ => {
                        let init = ModelParams::init(&self.config.model_for_seed(seed))
                            .map_err(|e| ExperimentError::Usage(e.to_string()))?;
                        run_strategy(&plan, init, &train, Some(&eval.tagged), Some(&hook))?
                    }
                };
                self.write_outcome(&dir, &outcome, seed, &mut manifest)?;
                manifest.train_seconds = Some(started.elapsed().as_secs_f64());
                manifest.complete = true;
                manifest.save(&dir)?;
                if strategy == Strategy::SftTag {
                    sft_tag = Some(outcome);
                }
                manifests.push(manifest);
            }
        }
        Ok(manifests)
    }

    fn write_outcome(
        &self,
        dir: &Path,
        outcome: &StrategyOutcome,
        seed: u64,
        manifest: &mut RunManifest,
    ) -> Result<(), ExperimentError> {
        for (stage, hyper) in outcome.stages.iter().zip(&outcome.plan.stages) {
            let ckpt = format!("stage{}.ckpt", stage.stage);
            save_checkpoint(dir.join(&ckpt), &stage.params).map_err(|e| ExperimentError::Data(e.to_string()))?;
            manifest.track(dir, &ckpt)?;
            let sidecar = StageSidecar {
                config_hash: self.hash.clone(),
                strategy: outcome.plan.strategy,
                seed,
                stage: stage.stage,
                spec: stage.spec,
                hyper: hyper.clone(),
                checkpoint: ckpt.clone(),
                checkpoint_sha256: manifest.files[&ckpt].clone(),
            };
            let side = format!("stage{}.json", stage.stage);
            Self::write(&dir.join(&side), serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))?;
            manifest.track(dir, &side)?;
            manifest.checkpoints.push(ckpt);
        }
        outcome
            .log
            .write_csv(&dir.join("train_log.csv"), &dir.join("epochs.csv"))
            .map_err(|e| ExperimentError::io(dir, e))?;
        for rel in ["train_log.csv", "epochs.csv"] {
            manifest.track(dir, rel)?;
        }
        manifest.train_log = Some("train_log.csv".into());
        manifest.epoch_log = Some("epochs.csv".into());
        Ok(())
    }

    /// Rebuilds a finished run from its checkpoints, sidecars and logs.
    pub fn load_outcome(&self, strategy: Strategy, seed: u64) -> Result<StrategyOutcome, ExperimentError> {
        let dir = self.run_dir(strategy, seed);
        let manifest = RunManifest::load(&dir)?;
        if !manifest.complete || manifest.checkpoints.is_empty() {
            return Err(ExperimentError::Data(format!("{}: run is incomplete", dir.display())));
        }
        manifest.verify(&dir)?;
        let mut stages = Vec::new();
        let mut hypers = Vec::new();
        for ckpt in &manifest.checkpoints {
            let side_path = dir.join(ckpt.replace(".ckpt", ".json"));
            let text = std::fs::read_to_string(&side_path).map_err(|e| ExperimentError::io(&side_path, e))?;
            let side: StageSidecar =
                serde_json::from_str(&text).map_err(|e| ExperimentError::Data(e.to_string()))?;
            let params = load_checkpoint(dir.join(ckpt)).map_err(|e| ExperimentError::Data(e.to_string()))?;
            hypers.push(side.hyper);
            stages.push(StageResult {
                stage: side.stage,
                spec: side.spec,
                params,
            });
        }
        let log = TrainLog::read_csv(&dir.join("train_log.csv"), &dir.join("epochs.csv"))
            .map_err(|e| ExperimentError::io(&dir, e))?;
        let initial = ModelParams::init(&self.config.model_for_seed(seed))
            .map_err(|e| ExperimentError::Usage(e.to_string()))?;
        Ok(StrategyOutcome {
            plan: crate::training::TrainPlan {
                strategy,
                stages: hypers,
            },
            initial,
            stages,
            log,
        })
    }

    fn matcher_judge(&self) -> Result<Option<Judge<Box<dyn crate::judge::Transport>>>, ExperimentError> {
        if self.config.eval.matcher != MatcherKind::Judge {
            return Ok(None);
        }
        let transport: Box<dyn crate::judge::Transport> = match &self.config.eval.judge_fixture {
            Some(path) => Box::new(FixtureTransport::load(path)?),
            None => http_transport(&self.config.judge)?,
        };
        Ok(Some(Judge::new(self.config.judge.clone(), transport)?))
    }

    /// Evaluates the final checkpoint of every requested run.
    pub fn evaluate(
        &self,
        strategies: &[Strategy],
        seeds: &[u64],
        progress: &Progress<'_>,
    ) -> Result<Vec<(RunManifest, EvalReport)>, ExperimentError> {
        let set = self.load_eval()?;
        let judge = self.matcher_judge()?;
        let mut out = Vec::new();
        for &seed in seeds {
            for &strategy in strategies {
                let dir = self.run_dir(strategy, seed);
                let mut manifest = RunManifest::load(&dir)
                    .map_err(|_| ExperimentError::Eval(format!("no trained run in {}", dir.display())))?;
                let ckpt = manifest
                    .final_checkpoint()
                    .filter(|_| manifest.complete)
                    .ok_or_else(|| ExperimentError::Eval(format!("no checkpoint in {}", dir.display())))?
                    .to_string();
                let params = load_checkpoint(dir.join(&ckpt)).map_err(|e| ExperimentError::Eval(e.to_string()))?;
                let started = Instant::now();
                let opts = EvalOptions {
                    settings: self.config.eval.generation,
                    alpha: self.config.eval.alpha,
                    nll_format: strategy.format(),
                    on_example: progress.on_judgment,
                };
                let report = match &judge {
                    Some(j) => {
                        let mut m = JudgeMatcher::new(j);
                        let r = evaluate(&params, &set, &opts, &mut m as &mut dyn Matcher)?;
                        j.write_audit(&dir.join("judge_audit.jsonl"))?;
                        r
                    }
                    None => evaluate(&params, &set, &opts, &mut LocalMatcher)?,
                };
                manifest.complete = false;
                manifest.save(&dir)?;
                report.write(&dir.join("eval"))?;
                for rel in ["eval/report.json", "eval/judgments.csv"] {
                    manifest.track(&dir, rel)?;
                }
                manifest.eval_report = Some("eval/report.json".into());
                manifest.eval_judgments = Some("eval/judgments.csv".into());
                manifest.eval_seconds = Some(started.elapsed().as_secs_f64());
                manifest.complete = true;
                manifest.save(&dir)?;
                out.push((manifest, report));
            }
        }
        Ok(out)
    }

    /// Every completed manifest under this experiment's directory.
    pub fn manifests(&self) -> Result<Vec<(PathBuf, RunManifest)>, ExperimentError> {
        let mut found = Vec::new();
        for strategy in Strategy::ALL {
            let sdir = self.root.join(strategy.name());
            let Ok(entries) = std::fs::read_dir(&sdir) else { continue };
            let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
            dirs.sort();
            for dir in dirs {
                if let Ok(m) = RunManifest::load(&dir) {
                    if m.complete {
                        found.push((dir, m));
                    }
                }
            }
        }
        found.sort_by_key(|(_, m)| (Strategy::ALL.iter().position(|s| *s == m.strategy), m.seed));
        Ok(found)
    }

    /// Builds the comparison table and curves and writes them under
    /// `report/`.
    pub fn report(&self) -> Result<ExperimentReport, ExperimentError> {
        let runs = self.manifests()?;
        let report = ExperimentReport::build(&runs)?;
        let dir = self.root.join("report");
        Self::mkdir(&dir)?;
        Self::write(&dir.join("summary.md"), report.table_markdown())?;
        Self::write(&dir.join("summary.csv"), report.table_csv()?)?;
        Self::write(&dir.join("curves.csv"), report.curves_csv()?)?;
        Self::write(&dir.join("eval_curves.csv"), report.eval_curves_csv()?)?;
        Ok(report)
    }
}

#[cfg(feature = "http")]
fn http_transport(cfg: &crate::judge::JudgeConfig) -> Result<Box<dyn crate::judge::Transport>, ExperimentError> {
    Ok(Box::new(crate::judge::HttpTransport::new(cfg)?))
}

#[cfg(not(feature = "http"))]
fn http_transport(_: &crate::judge::JudgeConfig) -> Result<Box<dyn crate::judge::Transport>, ExperimentError> {
    Err(ExperimentError::Judge(
        "built without the http feature; configure eval.judge_fixture".into(),
    ))
}
