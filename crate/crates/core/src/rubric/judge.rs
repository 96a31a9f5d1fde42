//! Judge adapters. The scripted judge is deterministic and ships for tests
//! and desk evaluations; the remote adapter wraps a chat-completion endpoint
//! with temperature pinned to zero.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::harness::{Role, Trajectory};
use crate::remote::{ChatClient, RemoteError};

use super::Criterion;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("remote judge error: {0}")]
    Remote(#[from] RemoteError),
    #[error("judge reply unparseable: {0}")]
    BadReply(String),
}

/// Input is the full trajectory plus the criterion assertion; output is a
/// binary verdict with evidence text.
pub trait JudgeAdapter: Send + Sync {
    fn id(&self) -> &str;
    fn judge(&self, traj: &Trajectory, criterion: &Criterion) -> Result<(bool, String), JudgeError>;
}

/// Deterministic scripted judge: the criterion assertion names its expected
/// evidence in double quotes, and the judge checks that every quoted phrase
/// appears in some agent turn (case-insensitive). Assertions without quoted
/// phrases are checked against the full assertion text.
pub struct ScriptedPhraseJudge;

pub fn quoted_phrases(text: &str) -> Vec<String> {
    let mut phrases = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('"') {
        let tail = &rest[start + 1..];
        let Some(end) = tail.find('"') else { break };
        phrases.push(tail[..end].to_string());
        rest = &tail[end + 1..];
    }
    phrases
}

impl JudgeAdapter for ScriptedPhraseJudge {
    fn id(&self) -> &str {
        "scripted-phrase-judge"
    }

    fn judge(&self, traj: &Trajectory, criterion: &Criterion) -> Result<(bool, String), JudgeError> {
        let mut phrases = quoted_phrases(&criterion.assertion);
        if phrases.is_empty() {
            phrases.push(criterion.assertion.clone());
        }
        let agent_text: String = traj
            .messages
            .iter()
            .filter(|m| m.role == Role::Agent)
            .map(|m| m.content.to_lowercase())
            .collect::<Vec<_>>()
            .join("\n");
        let missing: Vec<&String> = phrases
            .iter()
            .filter(|p| !agent_text.contains(&p.to_lowercase()))
            .collect();
        if missing.is_empty() {
            Ok((
                true,
                format!("all expected phrases present in agent turns: {phrases:?}"),
            ))
        } else {
            Ok((false, format!("missing expected phrases: {missing:?}")))
        }
    }
}

/// Fixture judge returning pre-set verdicts by criterion id.
pub struct StaticJudge {
    pub verdicts: BTreeMap<String, bool>,
    pub default: bool,
}

impl StaticJudge {
    pub fn new(verdicts: BTreeMap<String, bool>, default: bool) -> StaticJudge {
        StaticJudge { verdicts, default }
    }
}

impl JudgeAdapter for StaticJudge {
    fn id(&self) -> &str {
        "static-judge"
    }

    fn judge(&self, _traj: &Trajectory, criterion: &Criterion) -> Result<(bool, String), JudgeError> {
        let verdict = self
            .verdicts
            .get(&criterion.id)
            .copied()
            .unwrap_or(self.default);
        Ok((verdict, "fixture verdict".to_string()))
    }
}

/// Remote chat-completion judge. The endpoint, model and credentials come
/// from environment configuration; absent configuration disables the remote
/// kind entirely (scripted judges are always available).
pub struct RemoteChatJudge {
    client: ChatClient,
    id: String,
}

impl RemoteChatJudge {
    /// Build from `EDSIM_JUDGE_URL` / `EDSIM_JUDGE_MODEL` /
    /// `EDSIM_JUDGE_API_KEY`. Returns None when unset.
    pub fn from_env() -> Option<RemoteChatJudge> {
        let client = ChatClient::from_env("EDSIM_JUDGE")?;
        let id = format!("remote-judge:{}", client.model());
        Some(RemoteChatJudge { client, id })
    }
}

const JUDGE_SYSTEM_PROMPT: &str = "You are grading one binary criterion against a complete \
agent trajectory. Reply with a single line starting with PASS or FAIL, followed by a short \
evidence sentence citing the turn or audit entry you relied on.";

impl JudgeAdapter for RemoteChatJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(&self, traj: &Trajectory, criterion: &Criterion) -> Result<(bool, String), JudgeError> {
        let transcript = traj.render_transcript();
        let user = format!(
            "Criterion: {}\n\nTrajectory:\n{}\n\nDoes the trajectory satisfy the criterion?",
            criterion.assertion, transcript
        );
        let reply = self.client.complete(JUDGE_SYSTEM_PROMPT, &user)?;
        let trimmed = reply.trim();
        if let Some(rest) = trimmed.strip_prefix("PASS") {
            Ok((true, rest.trim().to_string()))
        } else if let Some(rest) = trimmed.strip_prefix("FAIL") {
            Ok((false, rest.trim().to_string()))
        } else {
            Err(JudgeError::BadReply(trimmed.chars().take(120).collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Message;

    fn traj_with_final(text: &str) -> Trajectory {
        let mut traj = Trajectory::for_tests("task", "agent", 1, 42, vec![]);
        traj.messages.push(Message::agent_text(text));
        traj
    }

    fn llm_criterion(assertion: &str) -> Criterion {
        Criterion {
            id: "c1".into(),
            assertion: assertion.into(),
            method: crate::rubric::Method::LlmJudge,
            safety_critical: false,
            dimension: crate::rubric::Dimension::DocumentationQuality,
            predicate: None,
            regex: None,
            intent_rescue_reason: None,
        }
    }

    #[test]
    fn scripted_judge_checks_quoted_phrases() {
        let judge = ScriptedPhraseJudge;
        let criterion = llm_criterion("final summary mentions \"transfer rationale\"");
        let (pass, _) = judge
            .judge(&traj_with_final("Documented the Transfer Rationale."), &criterion)
            .unwrap();
        assert!(pass);
        let (fail, evidence) = judge
            .judge(&traj_with_final("Nothing to see."), &criterion)
            .unwrap();
        assert!(!fail);
        assert!(evidence.contains("transfer rationale"));
    }

    #[test]
    fn quoted_phrase_extraction() {
        assert_eq!(
            quoted_phrases("says \"a b\" and \"c\""),
            vec!["a b".to_string(), "c".to_string()]
        );
        assert!(quoted_phrases("no quotes").is_empty());
    }

    #[test]
    fn remote_judge_disabled_without_env() {
        std::env::remove_var("EDSIM_JUDGE_URL");
        assert!(RemoteChatJudge::from_env().is_none());
    }
}
