//! Hand-labeled suites for option extraction and format scoring.
//!
//! The JSON fixtures under `tests/data/` are the ground truth for how
//! free-form generations should be read. Every case must pass; a failure
//! means the extraction rules changed behavior, which silently re-scores
//! training data.

use medcurate_core::rewards::{extract_option_letter, format_reward, FormatSpec};
use serde::Deserialize;

#[derive(Deserialize)]
struct ExtractionCase {
    text: String,
    expected: Option<char>,
}

#[derive(Deserialize)]
struct FormatCase {
    text: String,
    require_think: bool,
    expected: u8,
}

#[test]
fn option_extraction_suite_passes_completely() {
    let raw = include_str!("data/option_extraction_cases.json");
    let cases: Vec<ExtractionCase> = serde_json::from_str(raw).unwrap();
    assert!(cases.len() >= 50, "suite shrank to {} cases", cases.len());

    let mut failures = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let got = extract_option_letter(&case.text);
        if got != case.expected {
            failures.push(format!(
                "case {i}: {:?} -> {:?}, expected {:?}",
                case.text, got, case.expected
            ));
        }
    }
    assert!(failures.is_empty(), "{} failures:\n{}", failures.len(), failures.join("\n"));
}

#[test]
fn format_reward_suite_passes_completely() {
    let raw = include_str!("data/format_reward_cases.json");
    let cases: Vec<FormatCase> = serde_json::from_str(raw).unwrap();
    assert!(cases.len() >= 30, "suite shrank to {} cases", cases.len());

    let mut failures = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let spec = FormatSpec {
            answer_marker: "Answer:".into(),
            require_reasoning_block: case.require_think,
        };
        let got = format_reward(&case.text, &spec);
        if got != f64::from(case.expected) {
            failures.push(format!(
                "case {i}: {:?} (require_think={}) -> {got}, expected {}",
                case.text, case.require_think, case.expected
            ));
        }
    }
    assert!(failures.is_empty(), "{} failures:\n{}", failures.len(), failures.join("\n"));
}
