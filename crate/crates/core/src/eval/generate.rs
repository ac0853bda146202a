use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Special, TokenId, Vocabulary};
use crate::model::{Decoder, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Decoding {
    Greedy,
    Sampled { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    pub max_new_tokens: usize,
    pub decoding: Decoding,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            max_new_tokens: 96,
            decoding: Decoding::Greedy,
        }
    }
}

impl GenerationSettings {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            max_new_tokens,
            decoding: Decoding::Greedy,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.max_new_tokens == 0 {
            return Err(EvalError::InvalidSettings("max_new_tokens must be at least 1".into()));
        }
        if let Decoding::Sampled { temperature, .. } = self.decoding {
            if !(temperature > 0.0) || !temperature.is_finite() {
                return Err(EvalError::InvalidSettings(format!(
                    "temperature must be > 0, got {temperature}"
                )));
            }
        }
        Ok(())
    }

    /// Same settings with the sampling seed shifted by `offset`, so every
    /// example of an evaluation draws from its own stream.
    pub fn for_example(&self, offset: u64) -> Self {
        match self.decoding {
            Decoding::Greedy => *self,
            Decoding::Sampled { temperature, seed } => Self {
                decoding: Decoding::Sampled {
                    temperature,
                    seed: seed.wrapping_add(offset),
                },
                ..*self
            },
        }
    }
}

fn argmax(row: &Array1<f64>) -> TokenId {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as TokenId
}

fn sample(row: &Array1<f64>, temperature: f64, rng: &mut ChaCha8Rng) -> TokenId {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let weights: Vec<f64> = row.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as TokenId;
        }
        u -= w;
    }
    (weights.len() - 1) as TokenId
}

fn continue_from(
    params: &ModelParams,
    mut decoder: Decoder,
    pending: &[TokenId],
    settings: &GenerationSettings,
) -> Result<Vec<TokenId>, EvalError> {
    let eos = Vocabulary::standard().id(Special::Eos);
    let max_len = params.config.max_seq_len;
    let mut rng = match settings.decoding {
        Decoding::Sampled { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Decoding::Greedy => None,
    };
    let mut out = Vec::new();
    let mut logits = decoder.feed(params, pending)?;
    loop {
        let next = match (settings.decoding, rng.as_mut()) {
            (Decoding::Sampled { temperature, .. }, Some(r)) => sample(&logits, temperature, r),
            _ => argmax(&logits),
        };
        out.push(next);
        if next == eos || out.len() >= settings.max_new_tokens || decoder.len() >= max_len {
            return Ok(out);
        }
        logits = decoder.feed(params, &[next])?;
    }
}

fn check_prompt(params: &ModelParams, prompt: &[TokenId]) -> Result<(), EvalError> {
    if prompt.is_empty() {
        return Err(EvalError::InvalidSettings("empty prompt".into()));
    }
    if prompt.len() > params.config.max_seq_len {
        return Err(EvalError::PromptTooLong {
            len: prompt.len(),
            max: params.config.max_seq_len,
        });
    }
    Ok(())
}

/// Autoregressive continuation of `prompt`. Stops after `EOS` (which is
/// included) or after `max_new_tokens`, or when the context is full.
pub fn generate(
    params: &ModelParams,
    prompt: &[TokenId],
    settings: &GenerationSettings,
) -> Result<Vec<TokenId>, EvalError> {
    settings.validate()?;
    check_prompt(params, prompt)?;
    continue_from(params, Decoder::new(), prompt, settings)
}

/// A prompt prefix whose keys and values are computed once and reused for
/// every prompt that starts with it.
#[derive(Debug, Clone)]
pub struct SharedPrefix {
    ids: Vec<TokenId>,
    decoder: Decoder,
}

impl SharedPrefix {
    pub fn new(params: &ModelParams, ids: &[TokenId]) -> Result<Self, EvalError> {
        let mut decoder = Decoder::new();
        if !ids.is_empty() {
            check_prompt(params, ids)?;
            decoder.feed(params, ids)?;
        }
        Ok(Self {
            ids: ids.to_vec(),
            decoder,
        })
    }

    /// Longest common prefix of `prompts`, kept one token short of the
    /// shortest prompt so every prompt has something left to feed.
    pub fn common(params: &ModelParams, prompts: &[&[TokenId]]) -> Result<Self, EvalError> {
        let Some(first) = prompts.first() else {
            return Self::new(params, &[]);
        };
        let mut lcp = first.len();
        for p in &prompts[1..] {
            lcp = lcp.min(first.iter().zip(p.iter()).take_while(|(a, b)| a == b).count());
        }
        let shortest = prompts.iter().map(|p| p.len()).min().unwrap_or(0);
        Self::new(params, &first[..lcp.min(shortest.saturating_sub(1))])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Same result as [`generate`]; falls back to a fresh decoder when the
    /// prompt does not extend this prefix.
    pub fn generate(
        &self,
        params: &ModelParams,
        prompt: &[TokenId],
        settings: &GenerationSettings,
    ) -> Result<Vec<TokenId>, EvalError> {
        settings.validate()?;
        check_prompt(params, prompt)?;
        if prompt.len() > self.ids.len() && prompt.starts_with(&self.ids) {
            continue_from(params, self.decoder.clone(), &prompt[self.ids.len()..], settings)
        } else {
            continue_from(params, Decoder::new(), prompt, settings)
        }
    }
}
