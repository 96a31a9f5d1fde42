//! Deterministic overlay audit of an external judge.
//!
//! An overlay entry replaces a judge-graded criterion with a predicate over
//! the audit log. Cached trajectories are re-graded without any judge in the
//! loop; disagreements against the stored judge verdicts are classified
//! under the six-label taxonomy in fixed priority order, and entries are
//! tiered into reward-safe / research-only / keep-judge.

mod classify;
mod report;

pub use classify::{assertion_concept, classify_disagreement, ClassifyInput, DisagreementLabel};
pub use report::{
    emit_audit_report, run_overlay_audit, AuditReport, CategoryBreakdown, DisagreementRecord,
    ObservationRecord,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{
    read_trajectory, reconstruct_final_state, trajectory_file_name, verdict_file_name,
    EvaluationArchive, HarnessError, Trajectory, TRAJECTORY_DIR, VERDICT_DIR,
};
use crate::rubric::{AtomEvidence, Evaluator, PredicateError, PredicateExpr};
use crate::tasks::{Category, Task};
use crate::world::WorldState;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("overlay parse error: {0}")]
    Parse(String),
    #[error("overlay entry {entry}: predicate malformed: {source}")]
    Predicate {
        entry: String,
        source: PredicateError,
    },
    #[error(
        "overlay entry {0} uses attempt semantics without an intent_rescue_reason attestation; \
         refusing to load the overlay"
    )]
    AttestationMissing(String),
    #[error("overlay criterion {0} does not exist in the corpus")]
    UnknownCriterion(String),
    #[error("missing trajectory for observation {0}")]
    MissingTrajectory(String),
    #[error("missing reference verdict for observation {0}")]
    MissingReference(String),
    #[error("harness error: {0}")]
    Harness(#[from] HarnessError),
    #[error("observations disagree nowhere; classification input invalid for {0}")]
    NoDisagreement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

/// One deterministic replacement for a judge-graded criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayEntry {
    pub criterion_id: String,
    pub predicate: PredicateExpr,
    pub confidence: Confidence,
    /// Mandatory iff the predicate uses attempt semantics.
    pub intent_rescue_reason: Option<String>,
    pub category: Category,
    /// Declared target concept for wrong-entity detection.
    pub target_concept: Option<String>,
}

impl OverlayEntry {
    /// Only high-confidence entries take part in audit runs.
    pub fn audit_eligible(&self) -> bool {
        self.confidence == Confidence::High
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawOverlayEntry {
    criterion_id: String,
    predicate: String,
    confidence: Confidence,
    #[serde(default)]
    intent_rescue_reason: Option<String>,
    category: Category,
    #[serde(default)]
    target_concept: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawOverlay {
    version: u32,
    entries: Vec<RawOverlayEntry>,
}

/// Parse an overlay document. Loading is atomic: a single entry using
/// attempt semantics without its attestation fails the whole overlay.
pub fn parse_overlay(text: &str) -> Result<Vec<OverlayEntry>, OverlayError> {
    let raw: RawOverlay =
        serde_yaml::from_str(text).map_err(|e| OverlayError::Parse(e.to_string()))?;
    if raw.version != 1 {
        return Err(OverlayError::Parse(format!(
            "unsupported overlay version {}",
            raw.version
        )));
    }
    let mut entries = Vec::with_capacity(raw.entries.len());
    for raw_entry in raw.entries {
        let predicate =
            PredicateExpr::parse(&raw_entry.predicate).map_err(|source| OverlayError::Predicate {
                entry: raw_entry.criterion_id.clone(),
                source,
            })?;
        if predicate.uses_attempt()
            && raw_entry
                .intent_rescue_reason
                .as_deref()
                .map_or(true, |r| r.trim().is_empty())
        {
            return Err(OverlayError::AttestationMissing(raw_entry.criterion_id));
        }
        entries.push(OverlayEntry {
            criterion_id: raw_entry.criterion_id,
            predicate,
            confidence: raw_entry.confidence,
            intent_rescue_reason: raw_entry.intent_rescue_reason,
            category: raw_entry.category,
            target_concept: raw_entry.target_concept,
        });
    }
    Ok(entries)
}

pub fn load_overlay(path: &Path) -> Result<Vec<OverlayEntry>, OverlayError> {
    let text = std::fs::read_to_string(path).map_err(|e| OverlayError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_overlay(&text)
}

/// Observation identity: criterion x agent x trial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObsId {
    pub criterion_id: String,
    pub agent_id: String,
    pub trial_index: u32,
}

impl fmt::Display for ObsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}__{}__t{}",
            self.criterion_id, self.agent_id, self.trial_index
        )
    }
}

/// One re-graded observation.
#[derive(Debug, Clone)]
pub struct RegradeOutcome {
    pub obs: ObsId,
    pub task_id: String,
    pub overlay_verdict: bool,
    pub evidence: Vec<AtomEvidence>,
}

pub(crate) struct TrialData {
    pub trajectory: Trajectory,
    pub final_state: WorldState,
}

pub(crate) fn load_trial_data(
    archive_dir: &Path,
    task_id: &str,
    agent_id: &str,
    trial: u32,
    obs: &ObsId,
) -> Result<TrialData, OverlayError> {
    let path = archive_dir
        .join(TRAJECTORY_DIR)
        .join(trajectory_file_name(task_id, agent_id, trial));
    if !path.exists() {
        return Err(OverlayError::MissingTrajectory(obs.to_string()));
    }
    let trajectory = read_trajectory(&path)?;
    let final_state = reconstruct_final_state(&trajectory)?;
    Ok(TrialData {
        trajectory,
        final_state,
    })
}

/// Map each audited criterion to the task that owns it.
pub(crate) fn criterion_index<'a>(
    corpus: &'a [Task],
) -> BTreeMap<&'a str, (&'a Task, &'a crate::rubric::Criterion)> {
    let mut index = BTreeMap::new();
    for task in corpus {
        for criterion in &task.criteria {
            index.insert(criterion.id.as_str(), (task, criterion));
        }
    }
    index
}

/// Re-grade every cached trajectory for the audit-eligible entries, purely
/// via the world_state evaluator: no judge adapter is ever invoked here.
pub fn regrade(
    entries: &[OverlayEntry],
    corpus: &[Task],
    archive: &EvaluationArchive,
    archive_dir: &Path,
    evaluator: &Evaluator,
) -> Result<Vec<RegradeOutcome>, OverlayError> {
    let index = criterion_index(corpus);
    let mut outcomes = Vec::new();
    let mut cache: BTreeMap<(String, String, u32), TrialData> = BTreeMap::new();

    let mut agents = archive.agents.clone();
    agents.sort();
    for entry in entries.iter().filter(|e| e.audit_eligible()) {
        let (task, _) = index
            .get(entry.criterion_id.as_str())
            .ok_or_else(|| OverlayError::UnknownCriterion(entry.criterion_id.clone()))?;
        for agent_id in &agents {
            for trial in 1..=archive.trials {
                let obs = ObsId {
                    criterion_id: entry.criterion_id.clone(),
                    agent_id: agent_id.clone(),
                    trial_index: trial,
                };
                let key = (task.id.clone(), agent_id.clone(), trial);
                if !cache.contains_key(&key) {
                    cache.insert(
                        key.clone(),
                        load_trial_data(archive_dir, &task.id, agent_id, trial, &obs)?,
                    );
                }
                let data = &cache[&key];
                let verdict = evaluator.eval_world_state(
                    &entry.criterion_id,
                    &entry.predicate,
                    &data.trajectory,
                    &data.final_state,
                );
                outcomes.push(RegradeOutcome {
                    obs,
                    task_id: task.id.clone(),
                    overlay_verdict: verdict.satisfied,
                    evidence: verdict.evidence,
                });
            }
        }
    }
    Ok(outcomes)
}

/// Stored judge verdicts for the audited criteria, keyed by observation.
pub fn reference_verdicts(
    archive: &EvaluationArchive,
    archive_dir: &Path,
    outcomes: &[RegradeOutcome],
) -> Result<BTreeMap<ObsId, bool>, OverlayError> {
    let mut cache: BTreeMap<(String, String, u32), BTreeMap<String, bool>> = BTreeMap::new();
    let mut references = BTreeMap::new();
    let _ = archive;
    for outcome in outcomes {
        let key = (
            outcome.task_id.clone(),
            outcome.obs.agent_id.clone(),
            outcome.obs.trial_index,
        );
        if !cache.contains_key(&key) {
            let path = archive_dir.join(VERDICT_DIR).join(verdict_file_name(
                &key.0,
                &key.1,
                key.2,
            ));
            if !path.exists() {
                return Err(OverlayError::MissingReference(outcome.obs.to_string()));
            }
            let document = crate::harness::VerdictDocument::read(&path)?;
            cache.insert(
                key.clone(),
                document
                    .verdicts
                    .into_iter()
                    .map(|v| (v.criterion_id, v.satisfied))
                    .collect(),
            );
        }
        let verdict = cache[&key]
            .get(&outcome.obs.criterion_id)
            .copied()
            .ok_or_else(|| OverlayError::MissingReference(outcome.obs.to_string()))?;
        references.insert(outcome.obs.clone(), verdict);
    }
    Ok(references)
}

/// Per-entry tier under the audit rules: tier 1 iff zero disagreements,
/// tier 2 iff every disagreement label sits inside the judge-noise set,
/// tier 3 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub criterion_id: String,
    pub tier: u8,
    pub observations: usize,
    pub disagreements: usize,
    pub labels: BTreeMap<DisagreementLabel, usize>,
}

pub fn assign_tiers(
    entries: &[OverlayEntry],
    observation_counts: &BTreeMap<String, usize>,
    labels_by_entry: &BTreeMap<String, Vec<DisagreementLabel>>,
) -> Vec<TierAssignment> {
    let judge_noise = [
        DisagreementLabel::JudgeHallucination,
        DisagreementLabel::InfrastructureError,
    ];
    let mut assignments: Vec<TierAssignment> = entries
        .iter()
        .filter(|e| e.audit_eligible())
        .map(|entry| {
            let labels = labels_by_entry
                .get(&entry.criterion_id)
                .cloned()
                .unwrap_or_default();
            let tier = if labels.is_empty() {
                1
            } else if labels.iter().all(|l| judge_noise.contains(l)) {
                2
            } else {
                3
            };
            let mut label_counts: BTreeMap<DisagreementLabel, usize> = BTreeMap::new();
            for label in &labels {
                *label_counts.entry(*label).or_default() += 1;
            }
            TierAssignment {
                criterion_id: entry.criterion_id.clone(),
                tier,
                observations: observation_counts
                    .get(&entry.criterion_id)
                    .copied()
                    .unwrap_or(0),
                disagreements: labels.len(),
                labels: label_counts,
            }
        })
        .collect();
    assignments.sort_by(|a, b| (a.tier, &a.criterion_id).cmp(&(b.tier, &b.criterion_id)));
    assignments
}

#[cfg(test)]
mod tests {
    use super::*;

    const OVERLAY_WITH_ATTEMPT: &str = r#"
version: 1
entries:
  - criterion_id: scj-001-c02
    category: safety_critical_judgment
    confidence: high
    target_concept: blood_product
    predicate: CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin
    intent_rescue_reason: credits well-formed orders blocked by simulator faults
  - criterion_id: cc-001-c04
    category: clinical_communication
    confidence: medium
    predicate: CONTAINS processDischarge
"#;

    #[test]
    fn overlay_with_attestation_loads() {
        let entries = parse_overlay(OVERLAY_WITH_ATTEMPT).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(entries[0].audit_eligible());
        assert!(!entries[1].audit_eligible());
    }

    #[test]
    fn missing_attestation_blocks_the_whole_overlay() {
        let text = OVERLAY_WITH_ATTEMPT.replace(
            "    intent_rescue_reason: credits well-formed orders blocked by simulator faults\n",
            "",
        );
        let err = parse_overlay(&text).unwrap_err();
        let OverlayError::AttestationMissing(entry) = err else {
            panic!("wrong error: {err}");
        };
        assert_eq!(entry, "scj-001-c02");
    }

    #[test]
    fn blank_attestation_also_blocks() {
        let text = OVERLAY_WITH_ATTEMPT.replace(
            "intent_rescue_reason: credits well-formed orders blocked by simulator faults",
            "intent_rescue_reason: \"  \"",
        );
        assert!(matches!(
            parse_overlay(&text),
            Err(OverlayError::AttestationMissing(_))
        ));
    }

    #[test]
    fn tier_rules_partition() {
        let entries = vec![
            OverlayEntry {
                criterion_id: "e1".into(),
                predicate: PredicateExpr::parse("CONTAINS searchPatients").unwrap(),
                confidence: Confidence::High,
                intent_rescue_reason: None,
                category: Category::ClinicalReasoning,
                target_concept: None,
            },
            OverlayEntry {
                criterion_id: "e2".into(),
                predicate: PredicateExpr::parse("CONTAINS searchPatients").unwrap(),
                confidence: Confidence::High,
                intent_rescue_reason: None,
                category: Category::ClinicalReasoning,
                target_concept: None,
            },
            OverlayEntry {
                criterion_id: "e3".into(),
                predicate: PredicateExpr::parse("CONTAINS searchPatients").unwrap(),
                confidence: Confidence::High,
                intent_rescue_reason: None,
                category: Category::ClinicalReasoning,
                target_concept: None,
            },
        ];
        let counts: BTreeMap<String, usize> =
            [("e1", 6usize), ("e2", 6), ("e3", 6)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let mut labels = BTreeMap::new();
        labels.insert(
            "e2".to_string(),
            vec![
                DisagreementLabel::JudgeHallucination,
                DisagreementLabel::InfrastructureError,
            ],
        );
        labels.insert(
            "e3".to_string(),
            vec![DisagreementLabel::JudgeHallucination, DisagreementLabel::VocabGap],
        );
        let tiers = assign_tiers(&entries, &counts, &labels);
        let by_id: BTreeMap<&str, u8> =
            tiers.iter().map(|t| (t.criterion_id.as_str(), t.tier)).collect();
        assert_eq!(by_id["e1"], 1);
        assert_eq!(by_id["e2"], 2);
        assert_eq!(by_id["e3"], 3);
    }
}
