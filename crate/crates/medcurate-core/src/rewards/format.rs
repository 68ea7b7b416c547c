//! Structural format reward.
//!
//! Rewards generations that follow the expected response shape: optionally
//! a single reasoning block up front, then exactly one final answer line.
//! The reward is binary by design; partially well-formed output earns
//! nothing.

use serde::{Deserialize, Serialize};

/// Expected structure of a generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    /// Marker that must introduce the answer, e.g. `"Answer:"`. Must occur
    /// exactly once, on the last non-empty line.
    pub answer_marker: String,
    /// When set, the generation must open with one `<think>...</think>`
    /// block and the answer must come after it.
    pub require_reasoning_block: bool,
}

impl Default for FormatSpec {
    fn default() -> Self {
        FormatSpec { answer_marker: "Answer:".into(), require_reasoning_block: true }
    }
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// 1.0 when `generation` matches the template, else 0.0.
pub fn format_reward(generation: &str, spec: &FormatSpec) -> f64 {
    if well_formed(generation, spec) {
        1.0
    } else {
        0.0
    }
}

fn well_formed(generation: &str, spec: &FormatSpec) -> bool {
    let trimmed = generation.trim();
    if trimmed.is_empty() {
        return false;
    }

    let after_reasoning = if spec.require_reasoning_block {
        if count_occurrences(trimmed, THINK_OPEN) != 1
            || count_occurrences(trimmed, THINK_CLOSE) != 1
        {
            return false;
        }
        if !trimmed.starts_with(THINK_OPEN) {
            return false;
        }
        let close = trimmed.find(THINK_CLOSE).expect("counted above");
        if close < THINK_OPEN.len() {
            return false;
        }
        &trimmed[close + THINK_CLOSE.len()..]
    } else {
        trimmed
    };

    // Exactly one answer marker in the whole generation, positioned after
    // the reasoning block.
    if count_occurrences(trimmed, &spec.answer_marker) != 1 {
        return false;
    }
    let Some(marker_at) = after_reasoning.find(&spec.answer_marker) else {
        return false;
    };

    // The marker's line must be the final non-empty content.
    let after_marker = &after_reasoning[marker_at + spec.answer_marker.len()..];
    let mut lines = after_marker.lines();
    let answer_line = lines.next().unwrap_or("");
    if answer_line.trim().is_empty() {
        return false;
    }
    lines.all(|l| l.trim().is_empty())
}

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return 0;
    }
    haystack.matches(needle).count()
}
