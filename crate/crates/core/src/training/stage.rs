use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::log::{EpochSnapshot, StepRecord, TrainLog};
use super::loss::{batch_loss, mean_masked_nll, BatchItem};
use super::mask::{answer_span_mask, build_mask, LossMask};
use super::optim::{clip_grad_norm, AdamW, AdamWConfig, LinearSchedule};
use super::{StageHyperparams, StageSpec, TrainError};
use crate::corpus::TaggedExample;
use crate::model::ModelParams;

/// Everything a stage needs besides the starting parameters and the data.
pub struct StageContext<'a> {
    /// 1-based stage number recorded in the log.
    pub stage: usize,
    pub spec: StageSpec,
    pub hyper: &'a StageHyperparams,
    /// Held-out examples for the per-epoch answer-level NLL.
    pub eval: Option<&'a [TaggedExample]>,
    pub on_step: Option<&'a dyn Fn(&StepRecord)>,
}

impl<'a> StageContext<'a> {
    pub fn new(stage: usize, spec: StageSpec, hyper: &'a StageHyperparams) -> Self {
        Self {
            stage,
            spec,
            hyper,
            eval: None,
            on_step: None,
        }
    }
}

fn check_hyper(h: &StageHyperparams) -> Result<(), TrainError> {
    // a zero learning rate is allowed here; plans reject it
    if h.learning_rate == 0.0 {
        let probe = StageHyperparams {
            learning_rate: 1.0,
            ..h.clone()
        };
        return probe.validate();
    }
    h.validate()
}

/// Trains one stage. The optimizer state and the learning-rate schedule start
/// fresh. Data order is reshuffled every epoch from `hyper.seed`.
pub fn train_stage(
    mut params: ModelParams,
    train: &[TaggedExample],
    ctx: &StageContext<'_>,
    log: &mut TrainLog,
) -> Result<ModelParams, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let h = ctx.hyper;
    check_hyper(h)?;
    let format = ctx.spec.format;

    let masks: Vec<LossMask> = train
        .iter()
        .map(|ex| build_mask(ex, ctx.spec.scope, format))
        .collect::<Result<_, _>>()?;
    let monitors: Vec<LossMask> = train.iter().map(|ex| answer_span_mask(ex, format)).collect();

    let steps_per_epoch = train.len().div_ceil(h.batch_size);
    let total = steps_per_epoch * h.epochs;
    let schedule = LinearSchedule::new(h.learning_rate, h.warmup_fraction, total);
    let mut opt = AdamW::new(
        &params,
        AdamWConfig {
            weight_decay: h.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = params.zeros_like();
    let mut step = 0;

    for epoch in 1..=h.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(h.batch_size) {
            let items: Vec<BatchItem<'_>> = batch
                .iter()
                .map(|&i| BatchItem {
                    example: &train[i],
                    format,
                    mask: &masks[i],
                    monitor: Some(&monitors[i]),
                })
                .collect();
            grads.fill(0.0);
            let stats = batch_loss(&params, &items, Some(&mut grads))?;
            if !stats.nonfinite.is_empty() || !stats.loss.is_finite() || !grads.all_finite() {
                let examples = if stats.nonfinite.is_empty() {
                    batch.to_vec()
                } else {
                    stats.nonfinite.iter().map(|&k| batch[k]).collect()
                };
                return Err(TrainError::NonFinite {
                    stage: ctx.stage,
                    step,
                    examples,
                });
            }
            if h.clip_norm > 0.0 {
                clip_grad_norm(&mut grads, h.clip_norm);
            }
            let lr = schedule.lr(step);
            opt.step(&mut params, &grads, lr);

            let record = StepRecord {
                stage: ctx.stage,
                step,
                epoch,
                lr,
                loss_total: stats.loss,
                loss_answer: stats.monitor_loss,
            };
            if let Some(hook) = ctx.on_step {
                hook(&record);
            }
            log.steps.push(record);
            epoch_loss += stats.loss * batch.len() as f64;
            step += 1;
        }

        let eval_answer_nll = match ctx.eval {
            Some(eval) if !eval.is_empty() => Some(mean_masked_nll(
                &params,
                eval.iter().map(|ex| (ex, answer_span_mask(ex, format))),
                format,
                h.batch_size,
            )?),
            _ => None,
        };
        log.epochs.push(EpochSnapshot {
            stage: ctx.stage,
            epoch,
            steps: step,
            train_loss_mean: epoch_loss / train.len() as f64,
            eval_answer_nll,
        });
    }
    Ok(params)
}
