use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, TensorKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// One AdamW update of a flat tensor. `step` is 1-based. Weight decay is
/// decoupled and scaled by the learning rate, so `lr = 0` leaves `param`
/// untouched.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    cfg: &AdamWConfig,
    decay: bool,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let shrink = if decay { 1.0 - lr * cfg.weight_decay } else { 1.0 };
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] = param[i] * shrink - lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// AdamW over a whole parameter set. Only matrix tensors are decayed;
/// embeddings, biases and norm parameters are not.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl AdamW {
    pub fn new(params: &ModelParams, cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.step += 1;
        let step = self.step;
        let cfg = self.cfg;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            let decay = p.kind == TensorKind::Matrix;
            adamw_update(p.data, g.data, m.data, v.data, step, lr, &cfg, decay);
        }
    }
}

/// Scales `grads` so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Linear warmup to `peak` over `warmup_steps`, then linear decay to zero at
/// `total_steps`. `step` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LinearSchedule {
    pub fn new(peak: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        let warmup_steps = ((warmup_fraction * total_steps as f64).round() as usize).min(total_steps);
        Self {
            peak,
            warmup_steps,
            total_steps,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            self.peak * (step + 1) as f64 / self.warmup_steps as f64
        } else {
            let remaining = self.total_steps.saturating_sub(step) as f64;
            let span = (self.total_steps - self.warmup_steps).max(1) as f64;
            self.peak * remaining / span
        }
    }
}
