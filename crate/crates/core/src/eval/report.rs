use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{check_format, extract_answer, local_match};
use super::generate::{GenerationSettings, SharedPrefix};
use super::EvalError;
use crate::corpus::{reconstruct, RawExample, Special, TaggedExample, TargetFormat, TokenId, Vocabulary};
use crate::model::ModelParams;
use crate::training::{answer_span_mask, mean_masked_nll};

pub const DEFAULT_ALPHA: f64 = 0.7;

/// `alpha * acc + (1 - alpha) * fmt`.
pub fn score(acc: f64, fmt: f64, alpha: f64) -> f64 {
    alpha * acc + (1.0 - alpha) * fmt
}

/// Percentage change of `score` over `baseline`.
pub fn relative_improvement(score: f64, baseline: f64) -> Result<f64, EvalError> {
    if !(baseline > 0.0) {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (score - baseline) / baseline)
}

/// Rounds to two decimals and prints with an explicit sign, e.g. `+10.05%`.
pub fn format_improvement(pct: f64) -> String {
    let r = (pct * 100.0).round() / 100.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:+.2}%")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeSource {
    LocalMatch,
    ExternalJudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOutcome {
    pub correct: bool,
    pub source: JudgeSource,
}

/// One predicted answer to be judged against its gold answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRequest {
    pub index: usize,
    pub question: String,
    pub predicted: String,
    pub gold: String,
}

/// Decides whether a predicted answer is equivalent to the gold one.
pub trait Matcher {
    fn judge(&mut self, request: &MatchRequest) -> MatchOutcome;

    /// Outcomes in request order.
    fn judge_batch(&mut self, requests: &[MatchRequest]) -> Vec<MatchOutcome> {
        requests.iter().map(|r| self.judge(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalMatcher;

impl Matcher for LocalMatcher {
    fn judge(&mut self, r: &MatchRequest) -> MatchOutcome {
        MatchOutcome {
            correct: local_match(&r.predicted, &r.gold),
            source: JudgeSource::LocalMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub index: usize,
    pub predicted: Option<String>,
    pub gold: String,
    pub correct: bool,
    pub format_ok: bool,
    pub source: JudgeSource,
    /// Local-match verdict, kept even when an external judge decided.
    pub local_correct: bool,
    pub output: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub acc: f64,
    pub fmt: f64,
    pub alpha: f64,
    pub score: f64,
    /// Mean answer-level NLL of the gold targets.
    pub answer_nll: f64,
    pub nll_format: TargetFormat,
    pub judgments: Vec<Judgment>,
}

impl EvalReport {
    pub fn from_judgments(
        judgments: Vec<Judgment>,
        alpha: f64,
        answer_nll: f64,
        nll_format: TargetFormat,
    ) -> Result<Self, EvalError> {
        check_alpha(alpha)?;
        if judgments.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let n = judgments.len();
        let acc = judgments.iter().filter(|j| j.correct).count() as f64 / n as f64;
        let fmt = judgments.iter().filter(|j| j.format_ok).count() as f64 / n as f64;
        Ok(Self {
            n,
            acc,
            fmt,
            alpha,
            score: score(acc, fmt, alpha),
            answer_nll,
            nll_format,
            judgments,
        })
    }

    /// Recomputes the aggregates from the judgments and compares exactly.
    pub fn is_consistent(&self) -> bool {
        match Self::from_judgments(self.judgments.clone(), self.alpha, self.answer_nll, self.nll_format) {
            Ok(r) => r.n == self.n && r.acc == self.acc && r.fmt == self.fmt && r.score == self.score,
            Err(_) => false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
    }

    pub fn judgments_csv(&self) -> Result<String, EvalError> {
        #[derive(Serialize)]
        struct Row<'a> {
            index: usize,
            correct: bool,
            format_ok: bool,
            source: JudgeSource,
            local_correct: bool,
            predicted: &'a str,
            gold: &'a str,
            output: &'a str,
            error: &'a str,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for j in &self.judgments {
            w.serialize(Row {
                index: j.index,
                correct: j.correct,
                format_ok: j.format_ok,
                source: j.source,
                local_correct: j.local_correct,
                predicted: j.predicted.as_deref().unwrap_or(""),
                gold: &j.gold,
                output: &j.output,
                error: j.error.as_deref().unwrap_or(""),
            })
            .map_err(|e| EvalError::Report(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `report.json` and `judgments.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        let io = |e: std::io::Error| EvalError::Report(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.json"), self.to_json()).map_err(io)?;
        std::fs::write(dir.join("judgments.csv"), self.judgments_csv()?).map_err(io)
    }
}

fn check_alpha(alpha: f64) -> Result<(), EvalError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EvalError::InvalidSettings(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Raw examples with their tokenized form.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub raw: Vec<RawExample>,
    pub tagged: Vec<TaggedExample>,
}

impl EvalSet {
    pub fn new(raw: Vec<RawExample>, vocab: &Vocabulary) -> Result<Self, EvalError> {
        let tagged = raw
            .iter()
            .map(|r| reconstruct(r, vocab))
            .collect::<Result<_, _>>()?;
        Ok(Self { raw, tagged })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// The user turn of a chat-style prompt, or the whole prompt when it has no
/// `User:` marker.
pub fn question_text(prompt: &str) -> &str {
    let q = match prompt.rfind("User: ") {
        Some(i) => &prompt[i + "User: ".len()..],
        None => prompt,
    };
    let q = q.strip_suffix("Assistant:").unwrap_or(q);
    q.trim()
}

/// Text of generated ids with the terminating `EOS` removed.
pub fn render_output(vocab: &Vocabulary, ids: &[TokenId]) -> Result<String, EvalError> {
    let eos = vocab.id(Special::Eos);
    let body = ids.strip_suffix(&[eos]).unwrap_or(ids);
    Ok(vocab.detokenize(body)?)
}

pub struct EvalOptions<'a> {
    pub settings: GenerationSettings,
    pub alpha: f64,
    /// Target layout used for the answer-level NLL.
    pub nll_format: TargetFormat,
    pub on_example: Option<&'a dyn Fn(&Judgment)>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        Self {
            settings: GenerationSettings::default(),
            alpha: DEFAULT_ALPHA,
            nll_format: TargetFormat::Tagged,
            on_example: None,
        }
    }
}

/// Generates an answer for every example, checks its format, extracts and
/// judges the answer, and measures the answer-level NLL of the gold targets.
/// A failed generation counts as incorrect and format-false.
pub fn evaluate(
    params: &ModelParams,
    set: &EvalSet,
    opts: &EvalOptions<'_>,
    matcher: &mut dyn Matcher,
) -> Result<EvalReport, EvalError> {
    check_alpha(opts.alpha)?;
    opts.settings.validate()?;
    if set.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let vocab = Vocabulary::standard();
    let prompts: Vec<&[TokenId]> = set.tagged.iter().map(|t| t.prompt_ids.as_slice()).collect();
    let prefix = SharedPrefix::common(params, &prompts)?;

    let mut judgments = Vec::with_capacity(set.len());
    let mut requests = Vec::new();
    for (index, (raw, tagged)) in set.raw.iter().zip(&set.tagged).enumerate() {
        let settings = opts.settings.for_example(index as u64);
        let generated = prefix
            .generate(params, &tagged.prompt_ids, &settings)
            .and_then(|ids| render_output(&vocab, &ids));
        let (output, error) = match generated {
            Ok(o) => (o, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        let format_ok = error.is_none() && check_format(&output);
        let predicted = if error.is_none() { extract_answer(&output) } else { None };
        let local_correct = predicted.as_deref().is_some_and(|p| local_match(p, &raw.answer));
        if let Some(p) = &predicted {
            requests.push(MatchRequest {
                index,
                question: question_text(&raw.prompt).to_string(),
                predicted: p.clone(),
                gold: raw.answer.clone(),
            });
        }
        judgments.push(Judgment {
            index,
            predicted,
            gold: raw.answer.clone(),
            correct: false,
            format_ok,
            source: JudgeSource::LocalMatch,
            local_correct,
            output,
            error,
        });
    }

    let outcomes = matcher.judge_batch(&requests);
    for (req, outcome) in requests.iter().zip(outcomes) {
        let j = &mut judgments[req.index];
        j.correct = outcome.correct;
        j.source = outcome.source;
    }
    if let Some(hook) = opts.on_example {
        judgments.iter().for_each(hook);
    }

    let answer_nll = mean_masked_nll(
        params,
        set.tagged.iter().map(|t| (t, answer_span_mask(t, opts.nll_format))),
        opts.nll_format,
        32,
    )?;
    EvalReport::from_judgments(judgments, opts.alpha, answer_nll, opts.nll_format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_anchors() {
        assert!((score(0.8309, 1.0, 0.7) - 0.8816).abs() < 5e-5);
        assert!((score(0.7589, 0.9977, 0.7) - 0.8305).abs() < 5e-5);
        assert_eq!(score(1.0, 1.0, 0.7), 1.0);
        assert_eq!(score(0.0, 0.0, 0.7), 0.0);
    }

    #[test]
    fn improvement_formatting() {
        let pct = relative_improvement(0.8441, 0.7670).unwrap();
        assert_eq!(format_improvement(pct), "+10.05%");
        assert_eq!(format_improvement(relative_improvement(0.5, 0.5).unwrap()), "+0.00%");
        assert!(matches!(relative_improvement(0.5, 0.0), Err(EvalError::ZeroBaseline)));
    }

    #[test]
    fn question_extraction() {
        assert_eq!(question_text("sys\nUser: 12+30\nAssistant:"), "12+30");
        assert_eq!(question_text("plain"), "plain");
    }

    fn judgment(index: usize, correct: bool, format_ok: bool) -> Judgment {
        Judgment {
            index,
            predicted: correct.then(|| "1".to_string()),
            gold: "1".into(),
            correct,
            format_ok,
            source: JudgeSource::LocalMatch,
            local_correct: correct,
            output: String::new(),
            error: None,
        }
    }

    #[test]
    fn report_aggregates() {
        let js = vec![judgment(0, true, true), judgment(1, false, true), judgment(2, false, false), judgment(3, true, false)];
        let r = EvalReport::from_judgments(js, 0.7, 1.0, TargetFormat::Tagged).unwrap();
        assert_eq!((r.acc, r.fmt), (0.5, 0.5));
        assert!(r.is_consistent());
        let back = EvalReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.judgments_csv().unwrap().starts_with("index,correct,format_ok,source"));
        assert!(EvalReport::from_judgments(vec![], 0.7, 0.0, TargetFormat::Tagged).is_err());
        assert!(EvalReport::from_judgments(vec![judgment(0, true, true)], 1.5, 0.0, TargetFormat::Tagged).is_err());
    }
}
