mod common;

use common::*;
use sftkey::eval::{format_improvement, relative_improvement, score};
use sftkey::training::Strategy;

/// (model, method, dataset, acc, fmt, printed score) for every cell that has
/// all three published values.
fn triples() -> Vec<(&'static str, Strategy, &'static str, f64, f64, f64)> {
    let mut out = Vec::new();
    for s in &SCORES {
        let (Some(acc), Some(fmt)) = (table(&ACCURACY, s.model), table(&FORMAT, s.model)) else {
            continue;
        };
        for (m, method) in METHODS.iter().enumerate() {
            for (d, dataset) in DATASETS.iter().enumerate() {
                out.push((s.model, *method, *dataset, acc.rows[m][d], fmt.rows[m][d], s.rows[m][d]));
            }
        }
    }
    out
}

#[test]
fn spot_anchors() {
    for (acc, fmt, expected) in [(0.8309, 1.0, 0.8816), (0.7589, 0.9977, 0.8305), (0.7885, 0.0, 0.5519)] {
        assert!((score(acc, fmt, 0.7) - expected).abs() <= 0.0005);
    }
}

#[test]
fn composite_scores_match_components() {
    let all = triples();
    assert_eq!(all.len(), 48);
    let mut mismatched = Vec::new();
    for (model, method, dataset, acc, fmt, printed) in &all {
        let expected = 0.7 * acc + 0.3 * fmt;
        assert!((score(*acc, *fmt, 0.7) - expected).abs() < 1e-12);
        if (expected - printed).abs() > 0.0005 {
            mismatched.push((*model, *method, *dataset));
        }
    }
    assert_eq!(mismatched, SCORE_EXCEPTIONS.to_vec());
}

#[test]
fn exceptions_are_real_disagreements() {
    // the Key-Tag cell equals the one-stage ablation accuracy instead
    let q3 = &SCORES[0];
    assert!((q3.rows[2][3] - (0.7 * 0.5972 + 0.3 * 0.9138)).abs() <= 0.0005);
    assert!((0.7 * 0.8378 + 0.3 * 0.7946 - q3.rows[0][0]).abs() > 0.003);
}

#[test]
fn averages_match_rows() {
    let mut mismatched = Vec::new();
    for s in &SCORES {
        for (m, method) in METHODS.iter().enumerate() {
            let mean = s.rows[m].iter().sum::<f64>() / 4.0;
            if (mean - s.averages[m]).abs() > 0.0005 {
                mismatched.push((s.model, *method));
            }
        }
    }
    assert_eq!(mismatched, AVERAGE_EXCEPTIONS.to_vec());
}

#[test]
fn headline_improvement() {
    let pct = relative_improvement(0.8441, 0.7670).unwrap();
    assert_eq!(format_improvement(pct), "+10.05%");
    let q7 = relative_improvement(0.8048, 0.7586).unwrap();
    assert!((q7 - 6.07).abs() <= 0.05, "{q7}");
}

#[test]
fn printed_improvements() {
    let mut mismatched = Vec::new();
    for s in &SCORES {
        let pct = relative_improvement(s.averages[3], s.averages[0]).unwrap();
        if (pct - s.improvement).abs() > 0.05 {
            mismatched.push(s.model);
        }
    }
    assert_eq!(mismatched, IMPROVEMENT_EXCEPTIONS.to_vec());
}

#[test]
fn large_models_rank_two_stage_first() {
    for s in &SCORES[..3] {
        let best = s.averages.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(best, s.averages[3], "{}", s.model);
    }
}

#[test]
fn one_stage_answer_training_breaks_format() {
    for t in &FORMAT {
        let key_tag = t.rows[2].iter().sum::<f64>() / 4.0;
        let sft_tag = t.rows[1].iter().sum::<f64>() / 4.0;
        assert!(key_tag < sft_tag, "{}", t.model);
    }
}
