//! Trial orchestration: fresh world per trial, scripted or remote agents
//! driven against the tool server up to the task's turn budget, trajectory
//! capture and persistence, grading, archive assembly, and idempotent
//! resumption from files already on disk.

mod agents;
mod persist;
mod replay;

pub use agents::{scripted_agent, scripted_agent_library, Agent, AgentAction, RemoteChatAgent};
pub use persist::{
    read_trajectory, trajectory_file_name, verdict_file_name, write_trajectory, VerdictDocument,
};
pub use replay::{replay, reconstruct_final_state, ReplayMismatch, ReplayReport};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rubric::{AttemptCredit, Evaluator, GradeError, JudgeAdapter};
use crate::tasks::{Category, Task, TaskError};
use crate::toolserver::{FaultPlan, ServerError, ToolCatalog, ToolCallRecord, ToolServer};
use crate::world::{AuditEntry, GenerationProfile, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown generation profile {0:?}")]
    UnknownProfile(String),
    #[error("world error: {0}")]
    World(#[from] WorldError),
    #[error("server error: {0}")]
    Server(#[from] ServerError),
    #[error("task error: {0}")]
    Task(#[from] TaskError),
    #[error("grading error: {0}")]
    Grade(#[from] GradeError),
    #[error("io error at {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("trajectory file malformed: {0}")]
    MalformedTrajectory(String),
    #[error("self-judging forbidden: agent {0:?} would judge itself")]
    SelfJudging(String),
    #[error("replay diverged: {0}")]
    ReplayDiverged(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Agent,
    Tool,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Text,
    ToolCall,
    Marker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub kind: MessageKind,
    pub content: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Message {
        Message {
            role: Role::System,
            kind: MessageKind::Text,
            content: text.into(),
        }
    }

    pub fn agent_text(text: impl Into<String>) -> Message {
        Message {
            role: Role::Agent,
            kind: MessageKind::Text,
            content: text.into(),
        }
    }

    pub fn agent_call(record: &ToolCallRecord) -> Message {
        Message {
            role: Role::Agent,
            kind: MessageKind::ToolCall,
            content: serde_json::to_string(record).expect("tool call serializes"),
        }
    }

    pub fn tool_result(envelope: &serde_json::Value) -> Message {
        Message {
            role: Role::Tool,
            kind: MessageKind::Text,
            content: envelope.to_string(),
        }
    }

    pub fn budget_marker() -> Message {
        Message {
            role: Role::System,
            kind: MessageKind::Marker,
            content: "turn-budget-exhausted".to_string(),
        }
    }

    pub fn tool_call(&self) -> Option<ToolCallRecord> {
        if self.role == Role::Agent && self.kind == MessageKind::ToolCall {
            serde_json::from_str(&self.content).ok()
        } else {
            None
        }
    }
}

/// Complete record of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub agent_id: String,
    pub trial_index: u32,
    pub seed: u64,
    pub profile: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_plan: Option<FaultPlan>,
    pub messages: Vec<Message>,
    pub audit: Vec<AuditEntry>,
    pub final_core_digest: String,
    pub final_full_digest: String,
    pub budget_exhausted: bool,
}

impl Trajectory {
    /// Last agent turn, used for pattern criteria.
    pub fn final_assistant_turn(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Agent)
            .map(|m| m.content.as_str())
    }

    /// Recorded tool calls in order.
    pub fn tool_calls(&self) -> Vec<ToolCallRecord> {
        self.messages.iter().filter_map(Message::tool_call).collect()
    }

    /// Plain-text rendering for judge prompts.
    pub fn render_transcript(&self) -> String {
        let mut out = String::new();
        for message in &self.messages {
            let role = match message.role {
                Role::Agent => "agent",
                Role::Tool => "tool",
                Role::System => "system",
            };
            out.push_str(&format!("[{role}] {}\n", message.content));
        }
        out.push_str(&format!(
            "[audit] {} entries, final digest {}\n",
            self.audit.len(),
            self.final_core_digest
        ));
        out
    }

    /// Minimal fixture constructor for unit tests.
    pub fn for_tests(
        task_id: &str,
        agent_id: &str,
        trial_index: u32,
        seed: u64,
        audit: Vec<AuditEntry>,
    ) -> Trajectory {
        Trajectory {
            task_id: task_id.to_string(),
            agent_id: agent_id.to_string(),
            trial_index,
            seed,
            profile: "desk".to_string(),
            timestamp: 0,
            fault_plan: None,
            messages: Vec::new(),
            audit,
            final_core_digest: String::new(),
            final_full_digest: String::new(),
            budget_exhausted: false,
        }
    }
}

fn profile_by_name(name: &str) -> Result<GenerationProfile, HarnessError> {
    GenerationProfile::by_name(name).ok_or_else(|| HarnessError::UnknownProfile(name.to_string()))
}

/// Run one trial: fresh world at the task's seed, agent driven up to
/// `max_turns`, trajectory and final state returned. Budget exhaustion is
/// recorded in the trajectory, not an error.
pub fn run_trial(
    task: &Task,
    agent: &dyn Agent,
    trial_index: u32,
) -> Result<(Trajectory, WorldState), HarnessError> {
    let profile = profile_by_name(&task.world_setting.profile)?;
    let mut world = WorldState::generate(task.world_setting.seed, &profile)?;
    world.set_clock(task.world_setting.timestamp);
    let mut server = ToolServer::new(world, ToolCatalog::embedded());
    let fault_plan = task.fault_plan()?;
    if let Some(plan) = &fault_plan {
        server.inject_fault(plan.clone())?;
    }

    let mut messages = vec![Message::system(task.description.clone())];
    let mut budget_exhausted = true;
    for _ in 0..task.max_turns {
        match agent.next_action(task, &messages) {
            AgentAction::Call(record) => {
                messages.push(Message::agent_call(&record));
                let result = server.dispatch(&record.tool, &record.params);
                messages.push(Message::tool_result(&result.envelope()));
            }
            AgentAction::Final(text) => {
                messages.push(Message::agent_text(text));
                budget_exhausted = false;
                break;
            }
        }
    }
    if budget_exhausted {
        messages.push(Message::budget_marker());
    }

    let state = server.into_state();
    let trajectory = Trajectory {
        task_id: task.id.clone(),
        agent_id: agent.id().to_string(),
        trial_index,
        seed: task.world_setting.seed,
        profile: task.world_setting.profile.clone(),
        timestamp: task.world_setting.timestamp,
        fault_plan,
        messages,
        audit: state.audit().to_vec(),
        final_core_digest: state.core_digest(),
        final_full_digest: state.full_digest(),
        budget_exhausted,
    };
    Ok((trajectory, state))
}

/// One row of the evaluation archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub task_id: String,
    pub category: Category,
    pub agent_id: String,
    pub trial_index: u32,
    pub passed: bool,
    pub reward: f64,
    pub safety_failed: bool,
    pub budget_exhausted: bool,
    pub trajectory_file: String,
    pub verdict_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArchive {
    pub format_version: u32,
    pub trials: u32,
    pub agents: Vec<String>,
    /// agent id -> judge id; self-judging is rejected at build time.
    pub judge_assignment: BTreeMap<String, String>,
    pub evaluator: AttemptCredit,
    pub outcomes: Vec<OutcomeRow>,
    pub errors: Vec<String>,
}

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;
pub const ARCHIVE_FILE: &str = "archive.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const VERDICT_DIR: &str = "verdicts";

impl EvaluationArchive {
    pub fn load(out_dir: &Path) -> Result<EvaluationArchive, HarnessError> {
        let path = out_dir.join(ARCHIVE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationConfig {
    pub trials: u32,
    pub parallelism: usize,
    pub evaluator: Evaluator,
}

impl Default for EvaluationConfig {
    fn default() -> EvaluationConfig {
        EvaluationConfig {
            trials: 3,
            parallelism: 1,
            evaluator: Evaluator::default(),
        }
    }
}

struct Job<'a> {
    task: &'a Task,
    agent: &'a dyn Agent,
    trial: u32,
}

/// Run |corpus| x |agents| x trials, resuming from existing files: a trial
/// whose trajectory file exists is not re-run, and a verdict file that
/// exists is not re-graded. The archive is always rebuilt from disk, so an
/// interrupted run resumed later produces a byte-identical archive.
pub fn run_evaluation(
    corpus: &[Task],
    agents: &[Box<dyn Agent>],
    judge: &dyn JudgeAdapter,
    out_dir: &Path,
    config: &EvaluationConfig,
) -> Result<EvaluationArchive, HarnessError> {
    for agent in agents {
        if agent.id() == judge.id() {
            return Err(HarnessError::SelfJudging(agent.id().to_string()));
        }
    }
    std::fs::create_dir_all(out_dir.join(TRAJECTORY_DIR))
        .map_err(|e| io_err(out_dir, e))?;
    std::fs::create_dir_all(out_dir.join(VERDICT_DIR)).map_err(|e| io_err(out_dir, e))?;

    let mut jobs = Vec::new();
    for task in corpus {
        for agent in agents {
            for trial in 1..=config.trials {
                jobs.push(Job {
                    task,
                    agent: agent.as_ref(),
                    trial,
                });
            }
        }
    }

    let errors = std::sync::Mutex::new(Vec::<String>::new());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = config.parallelism.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if index >= jobs.len() {
                    break;
                }
                let job = &jobs[index];
                if let Err(e) = run_job(job, judge, out_dir, &config.evaluator) {
                    errors.lock().unwrap().push(format!(
                        "{}__{}__t{}: {e}",
                        job.task.id,
                        job.agent.id(),
                        job.trial
                    ));
                }
            });
        }
    });

    let mut archive = EvaluationArchive {
        format_version: ARCHIVE_FORMAT_VERSION,
        trials: config.trials,
        agents: agents.iter().map(|a| a.id().to_string()).collect(),
        judge_assignment: agents
            .iter()
            .map(|a| (a.id().to_string(), judge.id().to_string()))
            .collect(),
        evaluator: config.evaluator.attempt_credit,
        outcomes: collect_outcomes(corpus, agents, config.trials, out_dir)?,
        errors: errors.into_inner().unwrap(),
    };
    archive.errors.sort();
    let path = out_dir.join(ARCHIVE_FILE);
    std::fs::write(&path, archive.to_json_pretty()).map_err(|e| io_err(&path, e))?;
    Ok(archive)
}

fn run_job(
    job: &Job<'_>,
    judge: &dyn JudgeAdapter,
    out_dir: &Path,
    evaluator: &Evaluator,
) -> Result<(), HarnessError> {
    let traj_path = out_dir
        .join(TRAJECTORY_DIR)
        .join(trajectory_file_name(&job.task.id, job.agent.id(), job.trial));
    let verdict_path = out_dir
        .join(VERDICT_DIR)
        .join(verdict_file_name(&job.task.id, job.agent.id(), job.trial));

    let (trajectory, state) = if traj_path.exists() {
        if verdict_path.exists() {
            return Ok(());
        }
        let trajectory = read_trajectory(&traj_path)?;
        let state = reconstruct_final_state(&trajectory)?;
        (trajectory, state)
    } else {
        let (trajectory, state) = run_trial(job.task, job.agent, job.trial)?;
        write_trajectory(&traj_path, &trajectory)?;
        (trajectory, state)
    };

    if !verdict_path.exists() {
        let (verdicts, breakdown) =
            crate::rubric::grade(job.task, &trajectory, &state, Some(judge), evaluator)?;
        let document = VerdictDocument {
            task_id: job.task.id.clone(),
            agent_id: job.agent.id().to_string(),
            trial_index: job.trial,
            judge_id: Some(judge.id().to_string()),
            evaluator: evaluator.attempt_credit,
            verdicts,
            breakdown,
        };
        document.write(&verdict_path)?;
    }
    Ok(())
}

fn collect_outcomes(
    corpus: &[Task],
    agents: &[Box<dyn Agent>],
    trials: u32,
    out_dir: &Path,
) -> Result<Vec<OutcomeRow>, HarnessError> {
    let mut outcomes = Vec::new();
    let mut sorted: Vec<&Task> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut agent_ids: Vec<&str> = agents.iter().map(|a| a.id()).collect();
    agent_ids.sort_unstable();
    for task in sorted {
        for agent_id in &agent_ids {
            for trial in 1..=trials {
                let traj_file = trajectory_file_name(&task.id, agent_id, trial);
                let verdict_file = verdict_file_name(&task.id, agent_id, trial);
                let verdict_path = out_dir.join(VERDICT_DIR).join(&verdict_file);
                let traj_path = out_dir.join(TRAJECTORY_DIR).join(&traj_file);
                if !verdict_path.exists() || !traj_path.exists() {
                    continue; // per-trial fault already recorded in errors
                }
                let document = VerdictDocument::read(&verdict_path)?;
                let trajectory = read_trajectory(&traj_path)?;
                outcomes.push(OutcomeRow {
                    task_id: task.id.clone(),
                    category: task.category,
                    agent_id: agent_id.to_string(),
                    trial_index: trial,
                    passed: document.breakdown.passed,
                    reward: document.breakdown.reward,
                    safety_failed: document.breakdown.gate_tripped,
                    budget_exhausted: trajectory.budget_exhausted,
                    trajectory_file: format!("{TRAJECTORY_DIR}/{traj_file}"),
                    verdict_file: format!("{VERDICT_DIR}/{verdict_file}"),
                });
            }
        }
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_assistant_turn_skips_tool_messages() {
        let mut traj = Trajectory::for_tests("t", "a", 1, 42, vec![]);
        traj.messages = vec![
            Message::system("task"),
            Message::agent_text("working"),
            Message::tool_result(&serde_json::json!({"status":"ok","data":{}})),
        ];
        assert_eq!(traj.final_assistant_turn(), Some("working"));
    }

    #[test]
    fn budget_marker_is_system_marker() {
        let marker = Message::budget_marker();
        assert_eq!(marker.role, Role::System);
        assert_eq!(marker.kind, MessageKind::Marker);
    }
}
