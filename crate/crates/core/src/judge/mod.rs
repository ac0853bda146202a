//! Optional external judge for answer equivalence.
//!
//! The model's extracted answer is sent as Response 1 and the gold answer as
//! Response 2. A reply counts only through its leading "yes" or "no". When a
//! judgment fails after all retries, the example falls back to local
//! matching and the fallback is visible in its judge source.

mod prompt;
mod transport;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{local_match, JudgeSource, MatchOutcome, MatchRequest, Matcher};

pub use prompt::{parse_verdict, render_judge_prompt, JUDGE_TEMPLATE};
#[cfg(feature = "http")]
pub use transport::HttpTransport;
pub use transport::{CannedReply, FixtureTransport, Transport};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge prompt field {0} is empty")]
    EmptyField(&'static str),
    #[error("invalid judge config: {0}")]
    InvalidConfig(String),
    #[error("API key variable {0} is not set")]
    MissingApiKey(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("no yes/no verdict after {attempts} attempt(s); last reply {reply:?}")]
    Unparseable { attempts: usize, reply: String },
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("audit log: {0}")]
    Audit(String),
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
    pub temperature: f64,
    /// First backoff delay; doubles with every retry.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "judge".into(),
            api_key_env: "JUDGE_API_KEY".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            temperature: 0.0,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(JudgeError::InvalidConfig(format!(
                "timeout must be > 0, got {}",
                self.timeout_secs
            )));
        }
        if self.max_in_flight == 0 {
            return Err(JudgeError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub same: bool,
    pub reply: String,
    pub latency_ms: f64,
    pub attempts: usize,
}

/// One request attempt as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub index: usize,
    pub prompt_sha256: String,
    pub attempt: usize,
    /// `yes`, `no`, `unparseable` or `transport-error`.
    pub verdict: String,
    pub reply: String,
    pub latency_ms: f64,
}

pub struct Judge<T: Transport> {
    config: JudgeConfig,
    transport: T,
    audit: Mutex<Vec<AuditEntry>>,
}

impl<T: Transport> Judge<T> {
    pub fn new(config: JudgeConfig, transport: T) -> Result<Self, JudgeError> {
        config.validate()?;
        Ok(Self {
            config,
            transport,
            audit: Mutex::default(),
        })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Asks whether `answer1` and `answer2` answer `question` the same way.
    /// Transport errors and unparseable replies are both retried with
    /// exponential backoff.
    pub fn judge(&self, index: usize, question: &str, answer1: &str, answer2: &str) -> Result<JudgeVerdict, JudgeError> {
        let prompt = render_judge_prompt(question, answer1, answer2)?;
        let hash = prompt_hash(&prompt);
        let attempts = self.config.max_retries + 1;
        let mut last: Option<JudgeError> = None;
        for attempt in 0..attempts {
            if attempt > 0 && self.config.backoff_ms > 0 {
                let factor = 1u64 << (attempt - 1).min(16);
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms.saturating_mul(factor)));
            }
            let start = Instant::now();
            let result = self.transport.complete(&prompt);
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            let (label, reply) = match &result {
                Ok(r) => match parse_verdict(r) {
                    Some(true) => ("yes", r.clone()),
                    Some(false) => ("no", r.clone()),
                    None => ("unparseable", r.clone()),
                },
                Err(e) => ("transport-error", e.clone()),
            };
            self.audit.lock().expect("audit lock").push(AuditEntry {
                index,
                prompt_sha256: hash.clone(),
                attempt,
                verdict: label.into(),
                reply: reply.clone(),
                latency_ms,
            });
            match result {
                Ok(r) => match parse_verdict(&r) {
                    Some(same) => {
                        return Ok(JudgeVerdict {
                            same,
                            reply: r,
                            latency_ms,
                            attempts: attempt + 1,
                        })
                    }
                    None => last = Some(JudgeError::Unparseable { attempts: attempt + 1, reply: r }),
                },
                Err(message) => last = Some(JudgeError::Transport { attempts: attempt + 1, message }),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Judges every request with at most `max_in_flight` concurrent calls.
    /// Results come back in request order.
    pub fn judge_many(&self, requests: &[MatchRequest]) -> Vec<Result<JudgeVerdict, JudgeError>> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<JudgeVerdict, JudgeError>>>> =
            Mutex::new((0..requests.len()).map(|_| None).collect());
        let workers = self.config.max_in_flight.min(requests.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(r) = requests.get(i) else { break };
                    let v = self.judge(r.index, &r.question, &r.predicted, &r.gold);
                    slots.lock().expect("slot lock")[i] = Some(v);
                });
            }
        });
        slots
            .into_inner()
            .expect("slot lock")
            .into_iter()
            .map(|v| v.expect("every request judged"))
            .collect()
    }

    /// Audit entries ordered by example index and attempt.
    pub fn audit(&self) -> Vec<AuditEntry> {
        let mut entries = self.audit.lock().expect("audit lock").clone();
        entries.sort_by_key(|e| (e.index, e.attempt));
        entries
    }

    /// Appends the audit entries as JSON lines.
    pub fn write_audit(&self, path: &Path) -> Result<(), JudgeError> {
        use std::io::Write;
        let err = |e: std::io::Error| JudgeError::Audit(format!("{}: {e}", path.display()));
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        for e in self.audit() {
            let line = serde_json::to_string(&e).map_err(|e| JudgeError::Audit(e.to_string()))?;
            writeln!(f, "{line}").map_err(err)?;
        }
        Ok(())
    }
}

/// [`Matcher`] backed by a [`Judge`]; failed judgments fall back to local
/// matching.
pub struct JudgeMatcher<'a, T: Transport> {
    judge: &'a Judge<T>,
    pub failures: Vec<(usize, String)>,
}

impl<'a, T: Transport> JudgeMatcher<'a, T> {
    pub fn new(judge: &'a Judge<T>) -> Self {
        Self {
            judge,
            failures: Vec::new(),
        }
    }

    fn outcome(&mut self, req: &MatchRequest, verdict: Result<JudgeVerdict, JudgeError>) -> MatchOutcome {
        match verdict {
            Ok(v) => MatchOutcome {
                correct: v.same,
                source: JudgeSource::ExternalJudge,
            },
            Err(e) => {
                self.failures.push((req.index, e.to_string()));
                MatchOutcome {
                    correct: local_match(&req.predicted, &req.gold),
                    source: JudgeSource::LocalMatch,
                }
            }
        }
    }
}

impl<T: Transport> Matcher for JudgeMatcher<'_, T> {
    fn judge(&mut self, req: &MatchRequest) -> MatchOutcome {
        let v = self.judge.judge(req.index, &req.question, &req.predicted, &req.gold);
        self.outcome(req, v)
    }

    fn judge_batch(&mut self, requests: &[MatchRequest]) -> Vec<MatchOutcome> {
        let verdicts = self.judge.judge_many(requests);
        requests.iter().zip(verdicts).map(|(r, v)| self.outcome(r, v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(retries: usize) -> JudgeConfig {
        JudgeConfig {
            max_retries: retries,
            backoff_ms: 0,
            ..Default::default()
        }
    }

    #[test]
    fn retries_then_unparseable() {
        let j = Judge::new(cfg(2), FixtureTransport::replies(["It depends"; 3])).unwrap();
        match j.judge(0, "q", "a", "b") {
            Err(JudgeError::Unparseable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(j.audit().len(), 3);
    }

    #[test]
    fn transport_error_recovers() {
        let t = FixtureTransport::new([CannedReply::Error("reset".into()), CannedReply::Reply("Yes".into())]);
        let j = Judge::new(cfg(1), t).unwrap();
        let v = j.judge(3, "q", "a", "b").unwrap();
        assert!(v.same);
        assert_eq!(v.attempts, 2);
        let audit = j.audit();
        assert_eq!(audit[0].verdict, "transport-error");
        assert_eq!(audit[1].verdict, "yes");
        assert_eq!(audit[1].prompt_sha256, prompt_hash(&render_judge_prompt("q", "a", "b").unwrap()));
    }

    #[test]
    fn invalid_timeout() {
        let c = JudgeConfig {
            timeout_secs: 0.0,
            ..Default::default()
        };
        assert!(Judge::new(c, FixtureTransport::default()).is_err());
    }

    #[test]
    fn matcher_downgrades_failures() {
        let prompt = |a: &str| render_judge_prompt("q", a, "7").unwrap();
        let t = FixtureTransport::default()
            .with_prompt(&prompt("7"), vec![CannedReply::Reply("no".into())])
            .with_prompt(&prompt("007"), vec![CannedReply::Error("down".into())]);
        let j = Judge::new(cfg(0), t).unwrap();
        let mut m = JudgeMatcher::new(&j);
        let reqs = vec![
            MatchRequest { index: 0, question: "q".into(), predicted: "7".into(), gold: "7".into() },
            MatchRequest { index: 1, question: "q".into(), predicted: "007".into(), gold: "7".into() },
        ];
        let out = m.judge_batch(&reqs);
        assert_eq!(out[0], MatchOutcome { correct: false, source: JudgeSource::ExternalJudge });
        assert_eq!(out[1], MatchOutcome { correct: true, source: JudgeSource::LocalMatch });
        assert_eq!(m.failures.len(), 1);
    }
}
