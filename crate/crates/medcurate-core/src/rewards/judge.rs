//! LLM-as-judge grading for open-ended answers.
//!
//! The judge model sees the reference and the candidate and must reply with
//! a single verdict word. Anything we cannot parse counts as incorrect and
//! is flagged in the audit record rather than swallowed, so judging
//! failures stay visible downstream.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::{CompletionRequest, GatewayError, LlmGateway};

/// Default grading prompt. `{gold}` and `{generation}` are substituted.
pub const DEFAULT_JUDGE_TEMPLATE: &str = "You are grading a medical question answer.\n\
Reference answer: {gold}\n\
Candidate answer: {generation}\n\
Does the candidate convey the same clinical conclusion as the reference?\n\
Reply with exactly one word: CORRECT or INCORRECT.";

static VERDICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(incorrect|correct|no|yes)\b").expect("valid regex"));

/// What the judge said, kept alongside the reward for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeAudit {
    /// Normalized verdict: "correct", "incorrect", or "unparseable".
    pub verdict: String,
    /// Cache key of the judge response, for tracing back to the fixture.
    pub response_key: String,
    pub parsed: bool,
}

/// Builds the judge request for one (generation, gold) pair. Exposed so
/// fixtures can be recorded for exactly the request that scoring will send.
pub fn judge_request(generation: &str, gold: &str, template: &str) -> CompletionRequest {
    let prompt = template.replace("{gold}", gold).replace("{generation}", generation);
    CompletionRequest { prompt, media: Vec::new(), temperature: 0.0, max_tokens: 16 }
}

/// Asks the judge whether `generation` matches `gold`. Returns the binary
/// accuracy reward and the audit record. An unparseable verdict scores 0
/// with `parsed: false` and a warning log, not an error; gateway failures
/// propagate.
pub fn judge_open_answer(
    generation: &str,
    gold: &str,
    gateway: &LlmGateway,
    template: &str,
) -> Result<(f64, JudgeAudit), GatewayError> {
    let request = judge_request(generation, gold, template);
    let response = gateway.complete(&request)?;

    match VERDICT.find(&response.text) {
        Some(m) => {
            let word = m.as_str().to_ascii_lowercase();
            let correct = word == "correct" || word == "yes";
            let audit = JudgeAudit {
                verdict: if correct { "correct" } else { "incorrect" }.to_string(),
                response_key: response.key,
                parsed: true,
            };
            Ok((if correct { 1.0 } else { 0.0 }, audit))
        }
        None => {
            log::warn!(
                "judge verdict unparseable (key {}): {:?}",
                response.key,
                response.text
            );
            let audit = JudgeAudit {
                verdict: "unparseable".to_string(),
                response_key: response.key,
                parsed: false,
            };
            Ok((0.0, audit))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayConfig;

    fn fixture_gateway(dir: &std::path::Path, pairs: &[(&str, &str, &str)]) -> LlmGateway {
        let gw = LlmGateway::new(GatewayConfig::replay(dir));
        for (generation, gold, reply) in pairs {
            let request = judge_request(generation, gold, DEFAULT_JUDGE_TEMPLATE);
            gw.store_fixture(&request, reply).unwrap();
        }
        gw
    }

    #[test]
    fn correct_verdict_scores_one() {
        let dir = tempfile::tempdir().unwrap();
        let gw = fixture_gateway(dir.path(), &[("cardiomegaly", "cardiomegaly", "CORRECT")]);
        let (reward, audit) =
            judge_open_answer("cardiomegaly", "cardiomegaly", &gw, DEFAULT_JUDGE_TEMPLATE)
                .unwrap();
        assert_eq!(reward, 1.0);
        assert_eq!(audit.verdict, "correct");
        assert!(audit.parsed);
    }

    #[test]
    fn incorrect_verdict_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        let gw = fixture_gateway(dir.path(), &[("clear lungs", "effusion", "INCORRECT")]);
        let (reward, audit) =
            judge_open_answer("clear lungs", "effusion", &gw, DEFAULT_JUDGE_TEMPLATE).unwrap();
        assert_eq!(reward, 0.0);
        assert_eq!(audit.verdict, "incorrect");
    }

    #[test]
    fn incorrect_is_not_mistaken_for_correct() {
        let dir = tempfile::tempdir().unwrap();
        let gw = fixture_gateway(
            dir.path(),
            &[("a", "b", "The candidate is incorrect here."), ("c", "d", "verdict: CORRECT")],
        );
        let (r1, _) = judge_open_answer("a", "b", &gw, DEFAULT_JUDGE_TEMPLATE).unwrap();
        let (r2, _) = judge_open_answer("c", "d", &gw, DEFAULT_JUDGE_TEMPLATE).unwrap();
        assert_eq!(r1, 0.0);
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn unparseable_verdict_scores_zero_with_audit_flag() {
        let dir = tempfile::tempdir().unwrap();
        let gw = fixture_gateway(dir.path(), &[("x", "y", "I cannot decide, maybe?")]);
        let (reward, audit) =
            judge_open_answer("x", "y", &gw, DEFAULT_JUDGE_TEMPLATE).unwrap();
        assert_eq!(reward, 0.0);
        assert!(!audit.parsed);
        assert_eq!(audit.verdict, "unparseable");
    }

    #[test]
    fn missing_fixture_propagates_as_gateway_error() {
        let dir = tempfile::tempdir().unwrap();
        let gw = LlmGateway::new(GatewayConfig::replay(dir.path()));
        let err = judge_open_answer("x", "y", &gw, DEFAULT_JUDGE_TEMPLATE).unwrap_err();
        assert!(matches!(err, GatewayError::MissingFixture { .. }));
    }
}
