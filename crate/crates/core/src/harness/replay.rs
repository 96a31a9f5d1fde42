//! Trajectory replay: re-execute the recorded tool calls against a fresh
//! world at the recorded seed and compare per-call results and final
//! digests. Replay is also how cached trajectories recover their final
//! world state for re-grading.

use serde::Serialize;

use crate::toolserver::{ToolCatalog, ToolResult, ToolServer};
use crate::world::WorldState;

use super::{profile_by_name, HarnessError, MessageKind, Role, Trajectory};

#[derive(Debug, Clone, Serialize)]
pub struct ReplayMismatch {
    pub call_index: usize,
    pub tool: String,
    pub recorded: String,
    pub replayed: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub calls: usize,
    pub result_mismatches: Vec<ReplayMismatch>,
    pub core_digest_match: bool,
    pub full_digest_match: bool,
    pub audit_length_match: bool,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.result_mismatches.is_empty()
            && self.core_digest_match
            && self.full_digest_match
            && self.audit_length_match
    }
}

fn replay_inner(traj: &Trajectory) -> Result<(ReplayReport, WorldState), HarnessError> {
    let profile = profile_by_name(&traj.profile)?;
    let mut world = WorldState::generate(traj.seed, &profile)?;
    world.set_clock(traj.timestamp);
    let mut server = ToolServer::new(world, ToolCatalog::embedded());
    if let Some(plan) = &traj.fault_plan {
        server.inject_fault(plan.clone())?;
    }

    let mut mismatches = Vec::new();
    let mut calls = 0usize;
    let mut recorded_results = traj
        .messages
        .iter()
        .filter(|m| m.role == Role::Tool && m.kind == MessageKind::Text);
    for record in traj.tool_calls() {
        let result = server.dispatch(&record.tool, &record.params);
        calls += 1;
        let replayed = result.envelope().to_string();
        match recorded_results.next() {
            Some(recorded) => {
                let recorded_result = serde_json::from_str::<serde_json::Value>(&recorded.content)
                    .ok()
                    .and_then(|v| ToolResult::from_envelope(&v));
                let matches = recorded_result
                    .map(|r| r.envelope().to_string() == replayed)
                    .unwrap_or(false);
                if !matches {
                    mismatches.push(ReplayMismatch {
                        call_index: calls - 1,
                        tool: record.tool.clone(),
                        recorded: recorded.content.clone(),
                        replayed,
                    });
                }
            }
            None => mismatches.push(ReplayMismatch {
                call_index: calls - 1,
                tool: record.tool.clone(),
                recorded: "<missing>".to_string(),
                replayed,
            }),
        }
    }

    let state = server.into_state();
    let report = ReplayReport {
        calls,
        result_mismatches: mismatches,
        core_digest_match: state.core_digest() == traj.final_core_digest,
        full_digest_match: state.full_digest() == traj.final_full_digest,
        audit_length_match: state.audit().len() == traj.audit.len(),
    };
    Ok((report, state))
}

/// Re-execute and diff a recorded trajectory.
pub fn replay(traj: &Trajectory) -> Result<ReplayReport, HarnessError> {
    replay_inner(traj).map(|(report, _)| report)
}

/// Rebuild the final world state behind a cached trajectory. Fails when the
/// replayed digests do not match the recorded ones.
pub fn reconstruct_final_state(traj: &Trajectory) -> Result<WorldState, HarnessError> {
    let (report, state) = replay_inner(traj)?;
    if !report.matches() {
        return Err(HarnessError::ReplayDiverged(format!(
            "{} call mismatches, core digest match {}, full digest match {}",
            report.result_mismatches.len(),
            report.core_digest_match,
            report.full_digest_match
        )));
    }
    Ok(state)
}
