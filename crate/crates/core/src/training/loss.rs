//! Masked negative log-likelihood.
//!
//! For one example the loss is `-(1/sum m) * sum_t m_t log P(target_t | prompt,
//! target_<t)`. Masked positions still condition later predictions; they
//! only drop out of the sum.
//!
//! Batches share the longest common prompt prefix: it is run once, every
//! example continues from its keys/values, and the gradients those examples
//! send back into the prefix are summed before a single backward pass
//! through it. This is exact, not an approximation.

use ndarray::{Array1, Array2};

use super::mask::LossMask;
use super::TrainError;
use crate::corpus::{TaggedExample, TargetFormat};
use crate::model::{self, backward_segment, forward_segment, KvCache, ModelParams};

/// Mean masked NLL of one example and its exact gradient.
pub fn masked_nll(
    params: &ModelParams,
    example: &TaggedExample,
    format: TargetFormat,
    mask: &LossMask,
) -> Result<(f64, ModelParams), TrainError> {
    let items = [BatchItem {
        example,
        format,
        mask,
        monitor: None,
    }];
    let mut grads = params.zeros_like();
    let stats = batch_loss(params, &items, Some(&mut grads))?;
    Ok((stats.loss, grads))
}

/// Per-target-position `-log P(target_t | ...)` times the mask weight.
pub fn position_losses(
    params: &ModelParams,
    example: &TaggedExample,
    format: TargetFormat,
    mask: &LossMask,
) -> Result<Vec<f64>, TrainError> {
    check_mask(example, format, mask)?;
    let (logits, _) = model::forward(params, &example.input_ids(format))?;
    let rows = target_rows(example, 0);
    let target = example.target(format);
    Ok((0..target.len())
        .map(|t| {
            if mask.is_set(t) {
                -row_log_prob(&logits.row(rows + t).to_owned(), target[t] as usize)
            } else {
                0.0
            }
        })
        .collect())
}

pub struct BatchItem<'a> {
    pub example: &'a TaggedExample,
    pub format: TargetFormat,
    pub mask: &'a LossMask,
    /// Extra mask whose loss is reported but not differentiated.
    pub monitor: Option<&'a LossMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    /// Mean over examples of the per-example masked NLL.
    pub loss: f64,
    /// Same for the monitor masks (NaN when none were given).
    pub monitor_loss: f64,
    /// Positions within the batch whose loss was not finite.
    pub nonfinite: Vec<usize>,
}

fn check_mask(example: &TaggedExample, format: TargetFormat, mask: &LossMask) -> Result<(), TrainError> {
    let len = example.target(format).len();
    if mask.len() != len {
        return Err(TrainError::InvalidMask(format!(
            "mask length {} does not match target length {len}",
            mask.len()
        )));
    }
    if mask.count() == 0 {
        return Err(TrainError::ZeroMask);
    }
    Ok(())
}

/// Row of the logits that predicts target 0, relative to a segment that
/// starts at `offset`.
fn target_rows(example: &TaggedExample, offset: usize) -> usize {
    example.prompt_ids.len() - 1 - offset
}

fn row_log_prob(row: &Array1<f64>, target: usize) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[target] - lse
}

fn shared_prefix_len(items: &[BatchItem<'_>], inputs: &[Vec<u32>]) -> usize {
    if items.len() < 2 {
        return 0;
    }
    let first = &inputs[0];
    let mut lcp = first.len();
    for other in &inputs[1..] {
        lcp = lcp.min(first.iter().zip(other).take_while(|(a, b)| a == b).count());
    }
    // every supervised logit row must live in the per-example suffix
    let min_prompt = items.iter().map(|i| i.example.prompt_ids.len()).min().unwrap_or(0);
    lcp.min(min_prompt.saturating_sub(1))
}

/// Mean masked NLL over `items`. When `grads` is given, the gradient of that
/// mean is accumulated into it.
pub fn batch_loss(
    params: &ModelParams,
    items: &[BatchItem<'_>],
    mut grads: Option<&mut ModelParams>,
) -> Result<BatchStats, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for item in items {
        check_mask(item.example, item.format, item.mask)?;
        if let Some(m) = item.monitor {
            check_mask(item.example, item.format, m)?;
        }
    }
    let inputs: Vec<Vec<u32>> = items.iter().map(|i| i.example.input_ids(i.format)).collect();
    let prefix_len = shared_prefix_len(items, &inputs);
    let prefix = if prefix_len > 0 {
        let (_, trace) = forward_segment(params, &inputs[0][..prefix_len], None, false)?;
        let cache = trace.kv_cache();
        Some((trace, cache))
    } else {
        None
    };
    let past: Option<&KvCache> = prefix.as_ref().map(|(_, c)| c);

    let batch = items.len() as f64;
    let mut loss_sum = 0.0;
    let mut monitor_sum = 0.0;
    let mut nonfinite = Vec::new();
    let mut d_prefix: Option<KvCache> = None;

    for (index, (item, input)) in items.iter().zip(&inputs).enumerate() {
        let (logits, trace) = forward_segment(params, &input[prefix_len..], past, true)?;
        let logits = logits.expect("logits requested");
        let first_row = target_rows(item.example, prefix_len);
        let target = item.example.target(item.format);
        let norm = item.mask.count() as f64;

        let mut d_logits = grads.as_ref().map(|_| Array2::zeros(logits.raw_dim()));
        let mut ex_loss = 0.0;
        let mut mon_loss = 0.0;
        for (t, &tok) in target.iter().enumerate() {
            let train = item.mask.is_set(t);
            let mon = item.monitor.is_some_and(|m| m.is_set(t));
            if !train && !mon {
                continue;
            }
            let row = logits.row(first_row + t);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_prob = row[tok as usize] - max - sum.ln();
            if mon {
                mon_loss -= log_prob;
            }
            if train {
                ex_loss -= log_prob;
                if let Some(d) = d_logits.as_mut() {
                    let scale = 1.0 / (batch * norm);
                    let mut d_row = d.row_mut(first_row + t);
                    d_row.zip_mut_with(&row, |dv, &v| *dv = scale * (v - max).exp() / sum);
                    d_row[tok as usize] -= scale;
                }
            }
        }
        let ex_loss = ex_loss / norm;
        if !ex_loss.is_finite() {
            nonfinite.push(index);
        }
        loss_sum += ex_loss;
        if let Some(m) = item.monitor {
            monitor_sum += mon_loss / m.count() as f64;
        }

        if let (Some(g), Some(d)) = (grads.as_deref_mut(), d_logits.as_ref()) {
            let d_past = backward_segment(params, &trace, Some(d), None, g)?;
            if prefix_len > 0 {
                match d_prefix.as_mut() {
                    None => d_prefix = Some(d_past),
                    Some(acc) => {
                        for (a, b) in acc.layers.iter_mut().zip(d_past.layers) {
                            a.keys += &b.keys;
                            a.values += &b.values;
                        }
                    }
                }
            }
        }
    }

    if let (Some(g), Some((trace, _)), Some(d)) = (grads, prefix.as_ref(), d_prefix.as_ref()) {
        backward_segment(params, trace, None, Some(d), g)?;
    }

    let monitored = items.iter().any(|i| i.monitor.is_some());
    Ok(BatchStats {
        loss: loss_sum / batch,
        monitor_loss: if monitored { monitor_sum / batch } else { f64::NAN },
        nonfinite,
    })
}

/// Forward-only mean masked NLL over a dataset, evaluated in chunks.
pub fn mean_masked_nll<'a>(
    params: &ModelParams,
    items: impl IntoIterator<Item = (&'a TaggedExample, LossMask)>,
    format: TargetFormat,
    chunk: usize,
) -> Result<f64, TrainError> {
    let pairs: Vec<(&TaggedExample, LossMask)> = items.into_iter().collect();
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut total = 0.0;
    for group in pairs.chunks(chunk.max(1)) {
        let batch: Vec<BatchItem<'_>> = group
            .iter()
            .map(|(ex, m)| BatchItem {
                example: ex,
                format,
                mask: m,
                monitor: None,
            })
            .collect();
        total += batch_loss(params, &batch, None)?.loss * group.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Sum of squares of per-position loss contributions at masked-out
/// positions; exactly zero by construction. Used by tests and the
/// acceptance suite.
pub fn masked_out_contribution(losses: &[f64], mask: &LossMask) -> f64 {
    losses
        .iter()
        .enumerate()
        .filter(|(i, _)| !mask.is_set(*i))
        .map(|(_, v)| v.abs())
        .sum()
}
