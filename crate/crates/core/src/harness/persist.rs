//! Trajectory and verdict persistence. One jsonl file per trajectory with a
//! fixed line order (header, messages, audit entries, final line), one JSON
//! document per verdict set. File content is a pure function of the record,
//! so identical trials produce byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rubric::{AttemptCredit, RewardBreakdown, Verdict};
use crate::toolserver::FaultPlan;
use crate::world::AuditEntry;

use super::{io_err, HarnessError, Message, Trajectory};

pub fn trajectory_file_name(task_id: &str, agent_id: &str, trial: u32) -> String {
    format!("{task_id}__{agent_id}__t{trial}.jsonl")
}

pub fn verdict_file_name(task_id: &str, agent_id: &str, trial: u32) -> String {
    format!("{task_id}__{agent_id}__t{trial}.json")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        task_id: String,
        agent_id: String,
        trial_index: u32,
        seed: u64,
        profile: String,
        timestamp: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fault_plan: Option<FaultPlan>,
    },
    Message {
        #[serde(flatten)]
        message: Message,
    },
    Audit {
        entry: AuditEntry,
    },
    Final {
        final_core_digest: String,
        final_full_digest: String,
        budget_exhausted: bool,
    },
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    let mut push = |line: &Line| {
        serde_json::to_writer(&mut out, line).expect("trajectory line serializes");
        out.push(b'\n');
    };
    push(&Line::Header {
        task_id: traj.task_id.clone(),
        agent_id: traj.agent_id.clone(),
        trial_index: traj.trial_index,
        seed: traj.seed,
        profile: traj.profile.clone(),
        timestamp: traj.timestamp,
        fault_plan: traj.fault_plan.clone(),
    });
    for message in &traj.messages {
        push(&Line::Message {
            message: message.clone(),
        });
    }
    for entry in &traj.audit {
        push(&Line::Audit {
            entry: entry.clone(),
        });
    }
    push(&Line::Final {
        final_core_digest: traj.final_core_digest.clone(),
        final_full_digest: traj.final_full_digest.clone(),
        budget_exhausted: traj.budget_exhausted,
    });

    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut header: Option<Trajectory> = None;
    let mut finalized = false;
    for (number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(line).map_err(|e| {
            HarnessError::MalformedTrajectory(format!(
                "{} line {}: {e}",
                path.display(),
                number + 1
            ))
        })?;
        match parsed {
            Line::Header {
                task_id,
                agent_id,
                trial_index,
                seed,
                profile,
                timestamp,
                fault_plan,
            } => {
                header = Some(Trajectory {
                    task_id,
                    agent_id,
                    trial_index,
                    seed,
                    profile,
                    timestamp,
                    fault_plan,
                    messages: Vec::new(),
                    audit: Vec::new(),
                    final_core_digest: String::new(),
                    final_full_digest: String::new(),
                    budget_exhausted: false,
                });
            }
            Line::Message { message } => {
                header
                    .as_mut()
                    .ok_or_else(|| {
                        HarnessError::MalformedTrajectory("message before header".to_string())
                    })?
                    .messages
                    .push(message);
            }
            Line::Audit { entry } => {
                header
                    .as_mut()
                    .ok_or_else(|| {
                        HarnessError::MalformedTrajectory("audit before header".to_string())
                    })?
                    .audit
                    .push(entry);
            }
            Line::Final {
                final_core_digest,
                final_full_digest,
                budget_exhausted,
            } => {
                let traj = header.as_mut().ok_or_else(|| {
                    HarnessError::MalformedTrajectory("final before header".to_string())
                })?;
                traj.final_core_digest = final_core_digest;
                traj.final_full_digest = final_full_digest;
                traj.budget_exhausted = budget_exhausted;
                finalized = true;
            }
        }
    }
    let traj = header
        .ok_or_else(|| HarnessError::MalformedTrajectory("missing header line".to_string()))?;
    if !finalized {
        return Err(HarnessError::MalformedTrajectory(
            "missing final line".to_string(),
        ));
    }
    Ok(traj)
}

/// Verdicts and reward stored beside, never inside, the trajectory, so
/// re-grading never rewrites evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictDocument {
    pub task_id: String,
    pub agent_id: String,
    pub trial_index: u32,
    pub judge_id: Option<String>,
    pub evaluator: AttemptCredit,
    pub verdicts: Vec<Verdict>,
    pub breakdown: RewardBreakdown,
}

impl VerdictDocument {
    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("verdict document serializes");
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<VerdictDocument, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let mut traj = Trajectory::for_tests("T-1", "perfect", 2, 42, vec![]);
        traj.messages.push(Message::system("do the thing"));
        traj.messages.push(Message::agent_text("done"));
        traj.final_core_digest = "abc".into();
        traj.final_full_digest = "def".into();
        let path = dir.path().join(trajectory_file_name("T-1", "perfect", 2));
        write_trajectory(&path, &traj).unwrap();
        let reloaded = read_trajectory(&path).unwrap();
        assert_eq!(traj, reloaded);

        // Byte determinism.
        let first = std::fs::read(&path).unwrap();
        write_trajectory(&path, &traj).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_trajectory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(
            &path,
            "{\"type\":\"header\",\"task_id\":\"t\",\"agent_id\":\"a\",\"trial_index\":1,\"seed\":42,\"profile\":\"desk\",\"timestamp\":0}\n",
        )
        .unwrap();
        let err = read_trajectory(&path).unwrap_err();
        assert!(err.to_string().contains("final"));
    }
}
