use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use super::{ExperimentError, RunManifest};
use crate::eval::{format_improvement, relative_improvement, EvalReport};
use crate::training::{Strategy, TrainLog};

/// Seed-averaged metrics of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub seeds: usize,
    pub acc: f64,
    pub fmt: f64,
    pub score: f64,
    pub answer_nll: f64,
    /// Percent change of `score` over the SFT row; `None` without one.
    pub improvement_over_sft: Option<f64>,
}

/// One training step on the answer-level loss curve. `step` counts across
/// stages, so it increases monotonically within a series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub strategy: Strategy,
    pub seed: u64,
    pub stage: usize,
    pub step: usize,
    pub epoch: usize,
    pub loss_answer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCurvePoint {
    pub strategy: Strategy,
    pub seed: u64,
    pub stage: usize,
    pub epoch: usize,
    pub step: usize,
    pub eval_answer_nll: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub curves: Vec<CurvePoint>,
    pub eval_curves: Vec<EvalCurvePoint>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl ExperimentReport {
    /// Builds the report from completed runs; only evaluated runs enter the
    /// table, every run with a training log enters the curves.
    pub fn build(runs: &[(PathBuf, RunManifest)]) -> Result<Self, ExperimentError> {
        let mut evals: Vec<(Strategy, EvalReport)> = Vec::new();
        let mut curves = Vec::new();
        let mut eval_curves = Vec::new();
        for (dir, m) in runs {
            if let Some(rel) = &m.eval_report {
                let path = dir.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
                evals.push((m.strategy, EvalReport::from_json(&text)?));
            }
            if let (Some(steps), Some(epochs)) = (&m.train_log, &m.epoch_log) {
                let log = TrainLog::read_csv(&dir.join(steps), &dir.join(epochs))
                    .map_err(|e| ExperimentError::io(dir, e))?;
                let mut offset = 0;
                let mut stage_end = 0;
                let mut current = 0;
                for r in &log.steps {
                    if r.stage != current {
                        offset = stage_end;
                        current = r.stage;
                    }
                    stage_end = offset + r.step + 1;
                    curves.push(CurvePoint {
                        strategy: m.strategy,
                        seed: m.seed,
                        stage: r.stage,
                        step: offset + r.step,
                        epoch: r.epoch,
                        loss_answer: r.loss_answer,
                    });
                }
                let mut before = 0;
                let mut last_stage = 0;
                let mut last_steps = 0;
                for e in &log.epochs {
                    if e.stage != last_stage {
                        before += last_steps;
                        last_stage = e.stage;
                    }
                    last_steps = e.steps;
                    eval_curves.push(EvalCurvePoint {
                        strategy: m.strategy,
                        seed: m.seed,
                        stage: e.stage,
                        epoch: e.epoch,
                        step: before + e.steps,
                        eval_answer_nll: e.eval_answer_nll,
                    });
                }
            }
        }
        if evals.is_empty() && curves.is_empty() {
            return Err(ExperimentError::Data("no completed runs to report".into()));
        }

        let mut rows: Vec<ReportRow> = Strategy::ALL
            .iter()
            .filter_map(|&s| {
                let rs: Vec<&EvalReport> = evals.iter().filter(|(x, _)| *x == s).map(|(_, r)| r).collect();
                (!rs.is_empty()).then(|| ReportRow {
                    strategy: s,
                    seeds: rs.len(),
                    acc: mean(&rs.iter().map(|r| r.acc).collect::<Vec<_>>()),
                    fmt: mean(&rs.iter().map(|r| r.fmt).collect::<Vec<_>>()),
                    score: mean(&rs.iter().map(|r| r.score).collect::<Vec<_>>()),
                    answer_nll: mean(&rs.iter().map(|r| r.answer_nll).collect::<Vec<_>>()),
                    improvement_over_sft: None,
                })
            })
            .collect();
        let baseline = rows.iter().find(|r| r.strategy == Strategy::Sft).map(|r| r.score);
        for row in &mut rows {
            row.improvement_over_sft = baseline.and_then(|b| relative_improvement(row.score, b).ok());
        }
        Ok(Self {
            rows,
            curves,
            eval_curves,
        })
    }

    pub fn table_markdown(&self) -> String {
        let mut s = String::from(
            "| strategy | seeds | Acc | Fmt | Score | answer NLL | vs SFT |\n|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            let imp = match r.improvement_over_sft {
                Some(p) => format_improvement(p),
                None => "n/a".into(),
            };
            writeln!(
                s,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |",
                r.strategy, r.seeds, r.acc, r.fmt, r.score, r.answer_nll, imp
            )
            .expect("write to string");
        }
        s
    }

    pub fn table_csv(&self) -> Result<String, ExperimentError> {
        #[derive(Serialize)]
        struct Row {
            strategy: Strategy,
            seeds: usize,
            acc: f64,
            fmt: f64,
            score: f64,
            answer_nll: f64,
            improvement_over_sft: String,
        }
        to_csv(self.rows.iter().map(|r| Row {
            strategy: r.strategy,
            seeds: r.seeds,
            acc: r.acc,
            fmt: r.fmt,
            score: r.score,
            answer_nll: r.answer_nll,
            improvement_over_sft: r
                .improvement_over_sft
                .map(format_improvement)
                .unwrap_or_else(|| "unavailable".into()),
        }))
    }

    /// Long format: `strategy,seed,stage,step,epoch,loss_answer`.
    pub fn curves_csv(&self) -> Result<String, ExperimentError> {
        to_csv(self.curves.iter())
    }

    pub fn eval_curves_csv(&self) -> Result<String, ExperimentError> {
        to_csv(self.eval_curves.iter())
    }
}

fn to_csv<T: Serialize>(rows: impl Iterator<Item = T>) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| ExperimentError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
