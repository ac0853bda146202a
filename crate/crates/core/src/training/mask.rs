use std::fmt;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::{TaggedExample, TargetFormat};

/// Which target positions carry loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskScope {
    FullResponse,
    AnswerOnly,
}

/// Per-target-position 0/1 weights, aligned with the target ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMask {
    weights: Vec<u8>,
}

impl LossMask {
    /// Ones from `start` to the end, zeros before.
    pub fn from_start(len: usize, start: usize) -> Self {
        Self {
            weights: (0..len).map(|i| u8::from(i >= start)).collect(),
        }
    }

    pub fn from_weights(weights: Vec<u8>) -> Result<Self, TrainError> {
        if weights.iter().any(|&w| w > 1) {
            return Err(TrainError::InvalidMask("weights must be 0 or 1".into()));
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[u8] {
        &self.weights
    }

    pub fn count(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 1).count()
    }

    pub fn is_set(&self, position: usize) -> bool {
        self.weights[position] == 1
    }
}

impl fmt::Display for LossMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.weights {
            write!(f, "{w}")?;
        }
        Ok(())
    }
}

/// Prompt positions never carry loss; the mask covers the target only.
/// Answer-only masks start right after `</Thinking>` and so include
/// `<Answer>`, the answer tokens, `</Answer>` and `EOS`.
pub fn build_mask(
    example: &TaggedExample,
    scope: MaskScope,
    format: TargetFormat,
) -> Result<LossMask, TrainError> {
    let len = example.target(format).len();
    match (scope, format) {
        (MaskScope::FullResponse, _) => Ok(LossMask::from_start(len, 0)),
        (MaskScope::AnswerOnly, TargetFormat::Tagged) => {
            Ok(LossMask::from_start(len, example.boundary + 1))
        }
        (MaskScope::AnswerOnly, TargetFormat::Untagged) => Err(TrainError::UnsupportedCombination(
            "answer-only loss needs tagged targets".into(),
        )),
    }
}

/// Answer-level mask used for monitoring. For tagged targets it equals the
/// answer-only mask; for untagged targets it covers the answer tokens and
/// `EOS`.
pub fn answer_span_mask(example: &TaggedExample, format: TargetFormat) -> LossMask {
    LossMask::from_start(example.target(format).len(), example.answer_start(format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{reconstruct, RawExample, Vocabulary};

    fn example(thinking: &str, answer: &str) -> TaggedExample {
        reconstruct(&RawExample::new("p", thinking, answer).unwrap(), &Vocabulary::standard()).unwrap()
    }

    #[test]
    fn answer_only_length_nine() {
        // <T> a b </T> <A> c d </A> EOS
        let ex = example("ab", "cd");
        assert_eq!(ex.target_ids.len(), 9);
        assert_eq!(ex.boundary, 3);
        let m = build_mask(&ex, MaskScope::AnswerOnly, TargetFormat::Tagged).unwrap();
        assert_eq!(m.to_string(), "000011111");
    }

    #[test]
    fn full_response_all_ones() {
        let ex = example("ab", "cd");
        let m = build_mask(&ex, MaskScope::FullResponse, TargetFormat::Tagged).unwrap();
        assert_eq!(m.to_string(), "111111111");
        let u = build_mask(&ex, MaskScope::FullResponse, TargetFormat::Untagged).unwrap();
        assert_eq!(u.to_string(), "11111");
    }

    #[test]
    fn single_answer_token_has_four_ones() {
        let ex = example("abcd", "x");
        // 0-based: </Thinking> sits five slots before the end
        assert_eq!(ex.boundary, ex.target_ids.len() - 5);
        let m = build_mask(&ex, MaskScope::AnswerOnly, TargetFormat::Tagged).unwrap();
        assert_eq!(m.count(), 4);
    }

    #[test]
    fn answer_only_untagged_unsupported() {
        let ex = example("ab", "c");
        assert!(matches!(
            build_mask(&ex, MaskScope::AnswerOnly, TargetFormat::Untagged),
            Err(TrainError::UnsupportedCombination(_))
        ));
    }

    #[test]
    fn untagged_answer_span() {
        let ex = example("ab", "cd");
        assert_eq!(answer_span_mask(&ex, TargetFormat::Untagged).to_string(), "00111");
        assert_eq!(answer_span_mask(&ex, TargetFormat::Tagged).to_string(), "000011111");
    }
}
