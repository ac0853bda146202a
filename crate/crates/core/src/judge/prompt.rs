use super::JudgeError;

/// Equivalence-judging template (version 1) with `{question}`, `{answer1}`
/// and `{answer2}` placeholders.
pub const JUDGE_TEMPLATE: &str = include_str!("../../resources/judge_prompt_v1.txt");

const FIELDS: [&str; 3] = ["question", "answer1", "answer2"];

/// Fills the template in one left-to-right pass, so placeholder-like text
/// inside a field is copied verbatim rather than substituted again.
pub fn render_judge_prompt(question: &str, answer1: &str, answer2: &str) -> Result<String, JudgeError> {
    let values = [question, answer1, answer2];
    for (name, value) in FIELDS.iter().zip(values) {
        if value.trim().is_empty() {
            return Err(JudgeError::EmptyField(name));
        }
    }
    let mut out = String::with_capacity(JUDGE_TEMPLATE.len() + values.iter().map(|v| v.len()).sum::<usize>());
    let mut rest = JUDGE_TEMPLATE;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = FIELDS
            .iter()
            .zip(values)
            .find(|(name, _)| after.starts_with(*name) && after[name.len()..].starts_with('}'));
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// `Some(true)` for a reply whose first word is "yes", `Some(false)` for
/// "no", ignoring case and surrounding whitespace and punctuation.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let word: String = reply
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_one_line_then_answer() {
        let p = render_judge_prompt("2+2?", "4", "four").unwrap();
        assert!(p.contains("**Response 1**:\n4\n"));
        assert!(p.contains("**Response 2**:\nfour\n"));
        assert!(p.contains("**Question**:\n2+2?\n"));
        assert!(!p.contains("{answer"));
    }

    #[test]
    fn placeholders_in_fields_not_expanded() {
        let p = render_judge_prompt("{answer2}", "a", "b").unwrap();
        assert!(p.contains("**Question**:\n{answer2}\n"));
    }

    #[test]
    fn empty_fields_rejected() {
        assert!(matches!(render_judge_prompt("q", "a", ""), Err(JudgeError::EmptyField("answer2"))));
        assert!(render_judge_prompt(" ", "a", "b").is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("Yes"), Some(true));
        assert_eq!(parse_verdict("no."), Some(false));
        assert_eq!(parse_verdict("  YES, they match"), Some(true));
        assert_eq!(parse_verdict("\"No\""), Some(false));
        assert_eq!(parse_verdict("It depends"), None);
        assert_eq!(parse_verdict("yesterday"), None);
        assert_eq!(parse_verdict("nope"), None);
        assert_eq!(parse_verdict(""), None);
    }
}
