//! Reward signals and group-relative advantages for RL training data.
//!
//! Each prompt gets a group of N sampled generations. Every generation
//! earns a format reward (did it follow the response template) and an
//! accuracy reward (option matching for multiple choice, LLM-as-judge for
//! open-ended), mixed by configurable weights. Advantages are the group's
//! rewards standardized against their own mean and population standard
//! deviation, so a group where every generation ties carries no learning
//! signal.
//!
//! Group files are JSONL: `{prompt_id, task, gold, generations[]}` in,
//! `{prompt_id, rewards[], advantages[], judge_audit[]}` out.

mod format;
mod judge;
mod options;

pub use format::{format_reward, FormatSpec};
pub use judge::{judge_open_answer, judge_request, JudgeAudit, DEFAULT_JUDGE_TEMPLATE};
pub use options::{extract_option_letter, match_option};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, LlmGateway};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("group {prompt_id:?} has {n} generations, need at least 2")]
    TooFewGenerations { prompt_id: String, n: usize },
    #[error("group {prompt_id:?} gold answer {gold:?} is not a single option letter A-E")]
    BadGoldLetter { prompt_id: String, gold: String },
    #[error("group {prompt_id:?} is open-ended but no judge gateway was provided")]
    JudgeUnavailable { prompt_id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Whether a group's accuracy is scored by option matching or by judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTask {
    Mcq,
    Open,
}

/// N generations for one prompt sharing a gold reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationGroup {
    pub prompt_id: String,
    pub task: GroupTask,
    /// Option letter for `Mcq`, reference answer text for `Open`.
    pub gold: String,
    pub generations: Vec<String>,
}

/// Sampling and reward-mixing configuration. `beta` (the KL penalty
/// coefficient) and `group_count` are carried for the training manifest;
/// computing the KL term needs policy log-probs and happens trainer-side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub num_generations: usize,
    pub temperature: f64,
    pub beta: f64,
    pub group_count: u32,
    /// Floor for the advantage denominator.
    pub std_floor: f64,
    pub format_weight: f64,
    pub accuracy_weight: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            num_generations: 8,
            temperature: 0.9,
            beta: 0.04,
            group_count: 4,
            std_floor: 1e-6,
            format_weight: 0.5,
            accuracy_weight: 0.5,
        }
    }
}

/// Reward components for one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_reward: f64,
    pub accuracy_reward: f64,
    pub total: f64,
    /// Present exactly when the accuracy reward came from the judge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGeneration {
    pub breakdown: RewardBreakdown,
    pub advantage: f64,
}

/// Standardizes rewards within their group: `a_i = (r_i - mean) /
/// max(std, epsilon)` with population standard deviation. A constant group
/// maps to all zeros.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Vec<f64> {
    let n = rewards.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let denom = variance.sqrt().max(epsilon.max(f64::MIN_POSITIVE));
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// Scores every generation in `group` and attaches group-relative
/// advantages, preserving generation order. Open-ended groups need a
/// gateway for the judge; `judge_template` falls back to
/// [`DEFAULT_JUDGE_TEMPLATE`] when `None`.
pub fn score_group(
    group: &GenerationGroup,
    cfg: &GrpoConfig,
    format_spec: &FormatSpec,
    gateway: Option<&LlmGateway>,
    judge_template: Option<&str>,
) -> Result<Vec<ScoredGeneration>, RewardError> {
    if group.generations.len() < 2 {
        return Err(RewardError::TooFewGenerations {
            prompt_id: group.prompt_id.clone(),
            n: group.generations.len(),
        });
    }

    let gold_letter = match group.task {
        GroupTask::Mcq => {
            let mut chars = group.gold.trim().chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if ('A'..='E').contains(&c.to_ascii_uppercase()) => {
                    Some(c.to_ascii_uppercase())
                }
                _ => {
                    return Err(RewardError::BadGoldLetter {
                        prompt_id: group.prompt_id.clone(),
                        gold: group.gold.clone(),
                    })
                }
            }
        }
        GroupTask::Open => None,
    };

    let template = judge_template.unwrap_or(DEFAULT_JUDGE_TEMPLATE);
    let mut breakdowns = Vec::with_capacity(group.generations.len());
    for generation in &group.generations {
        let format = format_reward(generation, format_spec);
        let (accuracy, judge) = match gold_letter {
            Some(letter) => (match_option(generation, letter), None),
            None => {
                let gateway = gateway.ok_or_else(|| RewardError::JudgeUnavailable {
                    prompt_id: group.prompt_id.clone(),
                })?;
                let (accuracy, audit) =
                    judge_open_answer(generation, &group.gold, gateway, template)?;
                (accuracy, Some(audit))
            }
        };
        let total = cfg.format_weight * format + cfg.accuracy_weight * accuracy;
        breakdowns.push(RewardBreakdown {
            format_reward: format,
            accuracy_reward: accuracy,
            total,
            judge,
        });
    }

    let totals: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let advantages = group_advantages(&totals, cfg.std_floor);
    Ok(breakdowns
        .into_iter()
        .zip(advantages)
        .map(|(breakdown, advantage)| ScoredGeneration { breakdown, advantage })
        .collect())
}
