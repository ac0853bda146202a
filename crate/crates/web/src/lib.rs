//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated
//! TypeScript glue beyond `JSON.parse`.

use serde::Serialize;
use sftkey::corpus::{reconstruct, RawExample, TargetFormat, Token, Vocabulary};
use sftkey::eval::{check_format, extract_answer, format_improvement, local_match, normalize_answer, relative_improvement, score};
use sftkey::training::{answer_span_mask, build_mask, MaskScope};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Cell {
    text: String,
    special: bool,
    trained: bool,
    answer: bool,
}

#[derive(Serialize)]
struct Layout {
    prompt: Vec<String>,
    target: Vec<Cell>,
    boundary: Option<usize>,
    trained: usize,
    mask: String,
}

#[derive(Serialize)]
struct Check {
    format_ok: bool,
    answer: Option<String>,
    normalized: Option<String>,
    matches_gold: Option<bool>,
}

#[derive(Serialize)]
struct Scored {
    score: f64,
    baseline: f64,
    improvement: Option<String>,
    sweep: Vec<(f64, f64, f64)>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn cell_text(vocab: &Vocabulary, id: u32) -> (String, bool) {
    match vocab.token(id) {
        Some(Token::Char('\n')) => ("\\n".into(), false),
        Some(Token::Char(' ')) => ("\u{2423}".into(), false),
        Some(t @ Token::Char(_)) => (t.to_string(), false),
        Some(Token::Special(s)) if s.is_tag() => (s.literal().into(), true),
        Some(Token::Special(s)) => (format!("{s:?}").to_uppercase(), true),
        None => (format!("#{id}"), true),
    }
}

/// Token-level view of one example under a strategy's target format and
/// loss scope. `strategy` is one of `SFT`, `SFT-Tag`, `Key-Tag`.
#[wasm_bindgen]
pub fn target_layout(prompt: &str, thinking: &str, answer: &str, strategy: &str) -> Result<String, JsError> {
    let (format, scope) = match strategy {
        "SFT" => (TargetFormat::Untagged, MaskScope::FullResponse),
        "SFT-Tag" => (TargetFormat::Tagged, MaskScope::FullResponse),
        "Key-Tag" => (TargetFormat::Tagged, MaskScope::AnswerOnly),
        other => return Err(err(format!("unknown strategy {other:?}"))),
    };
    let vocab = Vocabulary::standard();
    let ex = reconstruct(&RawExample::new(prompt, thinking, answer).map_err(err)?, &vocab).map_err(err)?;
    let mask = build_mask(&ex, scope, format).map_err(err)?;
    let span = answer_span_mask(&ex, format);
    let ids = match format {
        TargetFormat::Tagged => &ex.target_ids,
        TargetFormat::Untagged => &ex.untagged_target_ids,
    };
    let target = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let (text, special) = cell_text(&vocab, id);
            Cell { text, special, trained: mask.is_set(i), answer: span.is_set(i) }
        })
        .collect();
    let prompt = ex.prompt_ids.iter().map(|&id| cell_text(&vocab, id).0).collect();
    Ok(to_json(&Layout {
        prompt,
        target,
        boundary: (format == TargetFormat::Tagged).then_some(ex.boundary),
        trained: mask.count(),
        mask: mask.weights().iter().map(|w| char::from(b'0' + w)).collect(),
    }))
}

/// Format check and answer extraction for a model output, plus a local
/// match against `gold` when one is given.
#[wasm_bindgen]
pub fn check_output(text: &str, gold: &str) -> String {
    let answer = extract_answer(text);
    to_json(&Check {
        format_ok: check_format(text),
        normalized: answer.as_deref().map(normalize_answer),
        matches_gold: match (&answer, gold.trim().is_empty()) {
            (Some(a), false) => Some(local_match(a, gold)),
            _ => None,
        },
        answer,
    })
}

/// Composite score for a method and a baseline, with the method's score
/// swept over alpha in steps of 0.1.
#[wasm_bindgen]
pub fn score_explorer(acc: f64, fmt: f64, base_acc: f64, base_fmt: f64, alpha: f64) -> Result<String, JsError> {
    let values = [acc, fmt, base_acc, base_fmt, alpha];
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(err("all inputs must lie in [0, 1]"));
    }
    let s = score(acc, fmt, alpha);
    let baseline = score(base_acc, base_fmt, alpha);
    let sweep = (0..=10)
        .map(|i| {
            let a = i as f64 / 10.0;
            (a, score(acc, fmt, a), score(base_acc, base_fmt, a))
        })
        .collect();
    Ok(to_json(&Scored {
        score: s,
        baseline,
        improvement: relative_improvement(s, baseline).ok().map(format_improvement),
        sweep,
    }))
}
