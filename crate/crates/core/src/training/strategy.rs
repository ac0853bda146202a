use super::log::{StepRecord, TrainLog};
use super::stage::{train_stage, StageContext};
use super::{StageSpec, Strategy, TrainError, TrainPlan};
use crate::corpus::TaggedExample;
use crate::model::ModelParams;

/// Parameters at the end of one stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub stage: usize,
    pub spec: StageSpec,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub plan: TrainPlan,
    pub initial: ModelParams,
    pub stages: Vec<StageResult>,
    pub log: TrainLog,
}

impl StrategyOutcome {
    pub fn final_params(&self) -> &ModelParams {
        &self.stages.last().expect("at least one stage").params
    }
}

fn run_stages(
    plan: &TrainPlan,
    mut outcome: StrategyOutcome,
    first_stage: usize,
    train: &[TaggedExample],
    eval: Option<&[TaggedExample]>,
    on_step: Option<&dyn Fn(&StepRecord)>,
) -> Result<StrategyOutcome, TrainError> {
    let specs = plan.strategy.stages();
    for (i, (spec, hyper)) in specs.iter().zip(&plan.stages).enumerate().skip(first_stage) {
        let start = match outcome.stages.last() {
            Some(prev) => prev.params.clone(),
            None => outcome.initial.clone(),
        };
        let ctx = StageContext {
            stage: i + 1,
            spec: *spec,
            hyper,
            eval,
            on_step,
        };
        let params = train_stage(start, train, &ctx, &mut outcome.log)?;
        outcome.stages.push(StageResult {
            stage: i + 1,
            spec: *spec,
            params,
        });
    }
    outcome.plan = plan.clone();
    Ok(outcome)
}

/// Runs every stage of `plan.strategy` from `initial`. Stage `k+1` starts
/// from the parameters stage `k` returned.
pub fn run_strategy(
    plan: &TrainPlan,
    initial: ModelParams,
    train: &[TaggedExample],
    eval: Option<&[TaggedExample]>,
    on_step: Option<&dyn Fn(&StepRecord)>,
) -> Result<StrategyOutcome, TrainError> {
    plan.validate()?;
    let outcome = StrategyOutcome {
        plan: plan.clone(),
        initial,
        stages: Vec::new(),
        log: TrainLog::new(),
    };
    run_stages(plan, outcome, 0, train, eval, on_step)
}

/// Runs `SFTKey-Tag` by continuing a finished `SFT-Tag` run, whose single
/// stage is the same computation as the first `SFTKey-Tag` stage when the
/// hyperparameters and data agree.
pub fn run_strategy_reusing(
    plan: &TrainPlan,
    sft_tag: &StrategyOutcome,
    train: &[TaggedExample],
    eval: Option<&[TaggedExample]>,
    on_step: Option<&dyn Fn(&StepRecord)>,
) -> Result<StrategyOutcome, TrainError> {
    plan.validate()?;
    if plan.strategy != Strategy::SftKeyTag || sft_tag.plan.strategy != Strategy::SftTag {
        return Err(TrainError::InvalidPlan(
            "only SFTKey-Tag can continue from an SFT-Tag run".into(),
        ));
    }
    if sft_tag.plan.stages[0] != plan.stages[0] || sft_tag.stages.len() != 1 {
        return Err(TrainError::InvalidPlan(
            "SFT-Tag run does not match the first SFTKey-Tag stage".into(),
        ));
    }
    run_stages(plan, sft_tag.clone(), 1, train, eval, on_step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{reconstruct, RawExample, TargetFormat, Vocabulary};
    use crate::model::ModelConfig;
    use crate::training::StageHyperparams;

    fn setup() -> (ModelParams, Vec<TaggedExample>) {
        let v = Vocabulary::standard();
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: v.len(),
            max_seq_len: 48,
            init_seed: 4,
        };
        let ex = [("Q: 3+4", "3+4=7\n", "7"), ("Q: 1+1", "1+1=2\n", "2"), ("Q: 0+8", "0+8=8\n", "8")]
            .iter()
            .map(|(p, t, a)| reconstruct(&RawExample::new(*p, *t, *a).unwrap(), &v).unwrap())
            .collect();
        (ModelParams::init(&cfg).unwrap(), ex)
    }

    fn hyper() -> StageHyperparams {
        StageHyperparams {
            learning_rate: 1e-2,
            epochs: 2,
            batch_size: 2,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn two_stage_hand_off_is_exact() {
        let (p, ex) = setup();
        let plan = TrainPlan::uniform(Strategy::SftKeyTag, hyper());
        let out = run_strategy(&plan, p, &ex, None, None).unwrap();
        assert_eq!(out.log.stages(), vec![1, 2]);
        assert_eq!(out.stages.len(), 2);
        assert!(!out.stages[0].params.bit_eq(&out.stages[1].params));

        // a freestanding Key-Tag run from the stage-1 parameters sees the same
        // step-0 loss
        let key = TrainPlan::uniform(Strategy::KeyTag, hyper());
        let free = run_strategy(&key, out.stages[0].params.clone(), &ex, None, None).unwrap();
        let s2 = out.log.stage_steps(2).next().unwrap();
        assert_eq!(free.log.steps[0].loss_total, s2.loss_total);
        assert!(free.final_params().bit_eq(out.final_params()));
    }

    #[test]
    fn reuse_matches_full_run() {
        let (p, ex) = setup();
        let full = run_strategy(&TrainPlan::uniform(Strategy::SftKeyTag, hyper()), p.clone(), &ex, None, None).unwrap();
        let first = run_strategy(&TrainPlan::uniform(Strategy::SftTag, hyper()), p, &ex, None, None).unwrap();
        let plan = TrainPlan::uniform(Strategy::SftKeyTag, hyper());
        let reused = run_strategy_reusing(&plan, &first, &ex, None, None).unwrap();
        assert!(reused.final_params().bit_eq(full.final_params()));
        assert_eq!(reused.log, full.log);
        assert_eq!(reused.plan.strategy, Strategy::SftKeyTag);

        let other = StageHyperparams { seed: 12, ..hyper() };
        let mismatched = TrainPlan::uniform(Strategy::SftKeyTag, other);
        assert!(run_strategy_reusing(&mismatched, &first, &ex, None, None).is_err());
    }

    #[test]
    fn sft_never_sees_tag_ids() {
        let (_, ex) = setup();
        let v = Vocabulary::standard();
        let spec = Strategy::Sft.stages()[0];
        assert_eq!(spec.format, TargetFormat::Untagged);
        let tags: usize = ex
            .iter()
            .flat_map(|e| e.input_ids(spec.format))
            .filter(|&id| v.is_tag_id(id))
            .count();
        assert_eq!(tags, 0);
    }
}
