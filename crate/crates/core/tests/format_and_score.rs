mod common;

use common::FORMAT_FIXTURES;
use proptest::prelude::*;
use sftkey::eval::{
    check_format, extract_answer, format_improvement, local_match, normalize_answer, relative_improvement, score,
    EvalError, EvalReport, JudgeSource, Judgment,
};
use sftkey::corpus::TargetFormat;

#[test]
fn fixture_suite_agrees() {
    assert!(FORMAT_FIXTURES.len() >= 30);
    let wrong: Vec<&str> = FORMAT_FIXTURES
        .iter()
        .filter(|(text, expected, _)| check_format(text) != *expected)
        .map(|(_, _, name)| *name)
        .collect();
    assert!(wrong.is_empty(), "disagreements: {wrong:?}");
}

#[test]
fn fixtures_cover_both_verdicts() {
    let pass = FORMAT_FIXTURES.iter().filter(|f| f.1).count();
    assert!(pass >= 10 && FORMAT_FIXTURES.len() - pass >= 20);
}

#[test]
fn extraction_examples() {
    assert_eq!(extract_answer("<Thinking>...</Thinking><Answer> 42 </Answer>").as_deref(), Some("42"));
    assert_eq!(extract_answer("no tags here").as_deref(), Some("no tags here"));
    assert_eq!(extract_answer("<Answer></Answer>"), None);
    assert_eq!(extract_answer("<Answer>   </Answer>"), None);
    assert_eq!(extract_answer("<Answer>7").as_deref(), None);
    assert_eq!(extract_answer("a\nb\n\n").as_deref(), Some("b"));
    assert_eq!(extract_answer("<Thinking>x</Thinking>7"), None);
    assert_eq!(extract_answer("<Thinking>x</Thinking><Answer>7</Answer><|eos|>").as_deref(), Some("7"));
    assert_eq!(
        extract_answer("<Answer>1</Answer><Answer>2</Answer>").as_deref(),
        Some("1"),
        "first span wins"
    );
}

#[test]
fn matching_examples() {
    assert!(local_match("007", "7"));
    assert!(local_match("B", "b"));
    assert!(!local_match("13", "31"));
    assert!(local_match("  the   Blue  ", "the blue"));
    assert!(local_match("-05", "-5"));
    assert!(local_match("-0", "0"));
    assert!(!local_match("-5", "5"));
    assert_eq!(normalize_answer("000"), "0");
    assert_eq!(normalize_answer("0.50"), "0.50");
}

#[test]
fn score_endpoints_and_improvement() {
    assert_eq!(score(1.0, 1.0, 0.7), 1.0);
    assert_eq!(score(0.0, 0.0, 0.7), 0.0);
    assert_eq!(format_improvement(relative_improvement(0.5, 0.5).unwrap()), "+0.00%");
    assert!(matches!(relative_improvement(0.5, 0.0), Err(EvalError::ZeroBaseline)));
    assert_eq!(format_improvement(-3.14159), "-3.14%");
}

fn judgment(i: usize, correct: bool, format_ok: bool) -> Judgment {
    Judgment {
        index: i,
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

fn content() -> impl Strategy<Value = String> {
    "[a-z0-9 +=<>/\n]{0,12}".prop_filter("no tag literal", |s| {
        !["<Thinking>", "</Thinking>", "<Answer>", "</Answer>"].iter().any(|t| s.contains(t))
    })
}

proptest! {
    #[test]
    fn score_between_components(acc in 0.0..=1.0f64, fmt in 0.0..=1.0f64, alpha in 0.0..=1.0f64) {
        let s = score(acc, fmt, alpha);
        prop_assert!(s >= acc.min(fmt) - 1e-12 && s <= acc.max(fmt) + 1e-12);
    }

    #[test]
    fn score_monotone(acc in 0.0..=1.0f64, fmt in 0.0..=1.0f64, d in 0.0..=0.5f64, alpha in 0.0..=1.0f64) {
        let s = score(acc, fmt, alpha);
        prop_assert!(score((acc + d).min(1.0), fmt, alpha) >= s - 1e-15);
        prop_assert!(score(acc, (fmt + d).min(1.0), alpha) >= s - 1e-15);
    }

    #[test]
    fn alpha_endpoints(acc in 0.0..=1.0f64, fmt in 0.0..=1.0f64) {
        prop_assert_eq!(score(acc, fmt, 1.0), acc);
        prop_assert_eq!(score(acc, fmt, 0.0), fmt);
    }

    #[test]
    fn well_formed_outputs_pass(t in content(), a in content(), ws in "[ \n\t]{0,3}", eos in any::<bool>()) {
        let text = format!("<Thinking>{t}</Thinking><Answer>{a}</Answer>{ws}{}", if eos { "<|eos|>" } else { "" });
        prop_assert!(check_format(&text));
    }

    #[test]
    fn format_implies_answer(t in content(), a in content()) {
        let text = format!("<Thinking>{t}</Thinking><Answer>{a}</Answer>");
        prop_assert!(check_format(&text));
        // a blank answer span is structurally valid but extracts nothing
        prop_assert_eq!(extract_answer(&text).is_some(), !a.trim().is_empty());
        if let Some(x) = extract_answer(&text) {
            prop_assert_eq!(x, a.trim());
        }
    }

    #[test]
    fn any_extra_tag_fails(t in content(), a in content(), tag in 0usize..4, pos in 0usize..3) {
        let extra = ["<Thinking>", "</Thinking>", "<Answer>", "</Answer>"][tag];
        let text = match pos {
            0 => format!("<Thinking>{t}{extra}</Thinking><Answer>{a}</Answer>"),
            1 => format!("<Thinking>{t}</Thinking><Answer>{a}{extra}</Answer>"),
            _ => format!("<Thinking>{t}</Thinking><Answer>{a}</Answer>{extra}"),
        };
        prop_assert!(!check_format(&text));
    }

    #[test]
    fn untagged_text_fails(s in content()) {
        prop_assert!(!check_format(&s));
    }

    #[test]
    fn normalize_idempotent(s in "[ A-Za-z0-9+-]{0,12}") {
        let n = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&n), n.clone());
        prop_assert!(local_match(&s, &n));
    }

    #[test]
    fn leading_zeros_ignored(n in 0u32..100_000, zeros in 0usize..4) {
        let padded = format!("{}{n}", "0".repeat(zeros));
        prop_assert!(local_match(&padded, &n.to_string()));
    }

    #[test]
    fn report_reaggregates(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60), alpha in 0.0..=1.0f64) {
        let js: Vec<Judgment> = flags.iter().enumerate().map(|(i, (c, f))| judgment(i, *c, *f)).collect();
        let r = EvalReport::from_judgments(js, alpha, 0.5, TargetFormat::Tagged).unwrap();
        prop_assert!(r.is_consistent());
        let correct = flags.iter().filter(|f| f.0).count();
        prop_assert_eq!(r.acc, correct as f64 / flags.len() as f64);
        let back = EvalReport::from_json(&r.to_json()).unwrap();
        prop_assert_eq!(back, r);
    }
}
