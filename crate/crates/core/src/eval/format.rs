//! Structural format check, answer extraction and local answer matching.

use crate::corpus::{ANSWER_CLOSE, ANSWER_OPEN, EOS_LITERAL, TAG_LITERALS, THINK_CLOSE, THINK_OPEN};

fn has_tag(s: &str) -> bool {
    TAG_LITERALS.iter().any(|t| s.contains(t))
}

/// True iff `text` is exactly
/// `<Thinking>..</Thinking><Answer>..</Answer>` followed by nothing but
/// whitespace and at most one end-of-sequence marker. Both contents must be
/// free of tag literals; leading whitespace is not allowed.
pub fn check_format(text: &str) -> bool {
    let Some(rest) = text.strip_prefix(THINK_OPEN) else {
        return false;
    };
    let Some((thinking, rest)) = rest.split_once(THINK_CLOSE) else {
        return false;
    };
    if has_tag(thinking) {
        return false;
    }
    let Some(rest) = rest.strip_prefix(ANSWER_OPEN) else {
        return false;
    };
    let Some((answer, tail)) = rest.split_once(ANSWER_CLOSE) else {
        return false;
    };
    if has_tag(answer) {
        return false;
    }
    let tail = tail.trim_start();
    let tail = tail.strip_prefix(EOS_LITERAL).unwrap_or(tail);
    tail.trim().is_empty()
}

/// The trimmed content of the first `<Answer>..</Answer>` span. Text without
/// any tag literal falls back to its last non-empty line, which is how the
/// untagged baseline states its answer.
pub fn extract_answer(text: &str) -> Option<String> {
    let text = text.trim_end();
    let text = text.strip_suffix(EOS_LITERAL).unwrap_or(text);
    if let Some((_, after)) = text.split_once(ANSWER_OPEN) {
        let (inner, _) = after.split_once(ANSWER_CLOSE)?;
        let inner = inner.trim();
        return (!inner.is_empty()).then(|| inner.to_string());
    }
    if has_tag(text) {
        return None;
    }
    text.lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .map(str::to_string)
}

/// Trim, collapse whitespace runs, case-fold, and drop leading zeros from
/// plain integers (an optional sign is kept).
pub fn normalize_answer(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let (sign, digits) = match collapsed.strip_prefix(['-', '+']) {
        Some(d) => (&collapsed[..1], d),
        None => ("", collapsed.as_str()),
    };
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        let trimmed = digits.trim_start_matches('0');
        let trimmed = if trimmed.is_empty() { "0" } else { trimmed };
        let sign = if sign == "-" && trimmed != "0" { "-" } else { "" };
        return format!("{sign}{trimmed}");
    }
    collapsed
}

pub fn local_match(predicted: &str, gold: &str) -> bool {
    normalize_answer(predicted) == normalize_answer(gold)
}
