//! Corpus preparation for group-relative RL: multiple-choice questions are
//! rewritten as open-ended ones, then binary yes/no questions are
//! downsampled to a small target share so the judge does not reward
//! coin-flipping.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::SynthesisError;
use crate::eval::tokenize;
use crate::ingest::RejectEntry;
use crate::sample::{validate, Speaker, TaskKind, VqaSample};

static OPTION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^[ \t]*\(?[A-Ea-e][.)：:][ \t].*(?:\n|$)").expect("option line pattern")
});

static STEM_OPTION_REF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:option|choice)\s+\(?[A-Ea-e]\b").expect("stem reference pattern")
});

/// Rewrites one multiple-choice sample as open-ended: option lines leave
/// the stem, the answer becomes the correct option's text, and the answer
/// space is dropped. Provenance is untouched.
pub fn mcq_to_open(sample: &VqaSample) -> Result<VqaSample, SynthesisError> {
    let options = sample
        .answer_space
        .as_ref()
        .filter(|_| sample.task.is_multiple_choice())
        .ok_or_else(|| SynthesisError::NotMcq { id: sample.id.clone() })?;
    let correct: Vec<&str> =
        options.iter().filter(|o| o.correct).map(|o| o.text.as_str()).collect();
    let [gold] = correct.as_slice() else {
        return Err(SynthesisError::NotMcq { id: sample.id.clone() });
    };

    let mut out = sample.clone();
    out.task = TaskKind::OpenQa;
    out.answer_space = None;

    let mut removed = 0usize;
    for turn in &mut out.turns {
        if turn.speaker != Speaker::Human {
            continue;
        }
        removed += OPTION_LINE.find_iter(&turn.text).count();
        let stem = OPTION_LINE.replace_all(&turn.text, "");
        turn.text = stem.trim_end().to_string();
    }
    // A stem either embeds the full option block or none of it; a partial
    // block means the sample was assembled wrong.
    if removed != 0 && removed != options.len() {
        return Err(SynthesisError::MalformedOptionBlock {
            id: sample.id.clone(),
            found: removed,
            expected: options.len(),
        });
    }
    for turn in &out.turns {
        if turn.speaker == Speaker::Human && STEM_OPTION_REF.is_match(&turn.text) {
            return Err(SynthesisError::OptionReferencingStem { id: sample.id.clone() });
        }
    }

    if let Some(answer) = out.turns.iter_mut().rev().find(|t| t.speaker == Speaker::Assistant) {
        answer.text = gold.to_string();
    }
    let check = validate(&out);
    if !check.is_pass() {
        return Err(SynthesisError::InvalidSynthesized { id: out.id, codes: check.codes() });
    }
    Ok(out)
}

/// Whether a sample is a binary yes/no question: an open or multiple-choice
/// task whose gold answer normalizes to "yes" or "no".
pub fn is_yes_no_sample(sample: &VqaSample) -> bool {
    if sample.task != TaskKind::OpenQa && !sample.task.is_multiple_choice() {
        return false;
    }
    match sample.gold_answer() {
        Some(gold) => matches!(tokenize(gold).as_slice(), [w] if w == "yes" || w == "no"),
        None => false,
    }
}

/// What [`downsample_yes_no`] kept and why.
#[derive(Debug, Clone, PartialEq)]
pub struct DownsampleOutcome {
    pub samples: Vec<VqaSample>,
    pub yes_no_total: usize,
    pub yes_no_kept: usize,
}

/// Keeps a seeded uniform subset of yes/no samples such that they make up
/// `target_frac` of the output. Everything else passes through in order.
/// When yes/no questions are already at or below the target the corpus is
/// returned unchanged.
pub fn downsample_yes_no(
    samples: Vec<VqaSample>,
    target_frac: f64,
    seed: u64,
) -> Result<DownsampleOutcome, SynthesisError> {
    if !(target_frac > 0.0 && target_frac < 1.0) {
        return Err(SynthesisError::BadTargetFraction { value: target_frac });
    }
    let yes_no_total = samples.iter().filter(|s| is_yes_no_sample(s)).count();
    let others = samples.len() - yes_no_total;

    // Keep k of the yes/no samples so that k / (others + k) = target_frac.
    let k = (target_frac * others as f64 / (1.0 - target_frac)).round() as usize;
    if yes_no_total == 0 || k >= yes_no_total {
        return Ok(DownsampleOutcome { samples, yes_no_total, yes_no_kept: yes_no_total });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, yes_no_total, k).into_iter().collect();

    let mut ordinal = 0usize;
    let samples = samples
        .into_iter()
        .filter(|sample| {
            if !is_yes_no_sample(sample) {
                return true;
            }
            let keep = kept.contains(&ordinal);
            ordinal += 1;
            keep
        })
        .collect();
    Ok(DownsampleOutcome { samples, yes_no_total, yes_no_kept: k })
}

/// Draws `count` samples uniformly without replacement, keeping corpus
/// order. Used to cut a training pool down to a fixed budget before
/// reformulation; no stratification, every sample is equally likely.
pub fn draw_uniform(
    samples: Vec<VqaSample>,
    count: usize,
    seed: u64,
) -> Result<Vec<VqaSample>, SynthesisError> {
    if count > samples.len() {
        return Err(SynthesisError::DrawTooLarge { requested: count, available: samples.len() });
    }
    if count == samples.len() {
        return Ok(samples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, samples.len(), count).into_iter().collect();
    Ok(samples
        .into_iter()
        .enumerate()
        .filter_map(|(i, sample)| kept.contains(&i).then_some(sample))
        .collect())
}

/// Combined RL data prep plus its audit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GrpoPrepOutcome {
    pub samples: Vec<VqaSample>,
    pub rejects: Vec<RejectEntry>,
    pub converted: usize,
    pub yes_no_total: usize,
    pub yes_no_kept: usize,
}

/// Full RL preparation: every multiple-choice sample is reformulated as
/// open-ended (failures go to rejects), then yes/no questions are
/// downsampled. The target fraction is measured on the post-conversion
/// corpus.
pub fn prepare_grpo(
    corpus: Vec<VqaSample>,
    target_frac: f64,
    seed: u64,
) -> Result<GrpoPrepOutcome, SynthesisError> {
    let mut converted = 0usize;
    let mut rejects = Vec::new();
    let mut prepared = Vec::with_capacity(corpus.len());
    for sample in corpus {
        if sample.task.is_multiple_choice() {
            match mcq_to_open(&sample) {
                Ok(open) => {
                    converted += 1;
                    prepared.push(open);
                }
                Err(err) => {
                    rejects.push(RejectEntry { key: sample.id.clone(), reason: err.to_string() });
                }
            }
        } else {
            prepared.push(sample);
        }
    }
    let outcome = downsample_yes_no(prepared, target_frac, seed)?;
    Ok(GrpoPrepOutcome {
        samples: outcome.samples,
        rejects,
        converted,
        yes_no_total: outcome.yes_no_total,
        yes_no_kept: outcome.yes_no_kept,
    })
}
