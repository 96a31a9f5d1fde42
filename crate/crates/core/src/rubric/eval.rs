//! Deterministic evaluation of predicates over (trajectory, final state).
//!
//! Matching semantics:
//! - `CONTAINS` without `ATTEMPT` qualifies only entries with an ok result.
//! - `CONTAINS ATTEMPT` additionally credits entries whose error code sits in
//!   the simulator-side allowlist (unknown_task_type, not_implemented,
//!   simulator_error, internal_error, service_unavailable). Agent-side schema
//!   errors (missing_param, invalid_params, unknown_tool) never count.
//! - `NOT` inverts an atom; a satisfied restraint atom carries an explicit
//!   empty-scan record as its absence proof.
//! - `ORDERED a BEFORE b` compares the seq numbers of the first qualifying
//!   (ok) occurrences.
//! - `FINAL_STATE` resolves `entity-id.field` against the final world state;
//!   bed status paths consult the ledger.

use serde::{Deserialize, Serialize};

use crate::harness::Trajectory;
use crate::world::{AuditEntry, BedStatus, EntityKind, WorldState};

use super::predicate::{Atom, Cmp, ParamFilter, PredicateExpr, ToolFilter};
use super::synonyms::{canonicalize, SynonymTable};
use super::{Method, Verdict};

/// Attempt-credit policy; the comparison harness grades archives under two
/// policies to report verdict flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttemptCredit {
    /// Production semantics: ok, or error with a simulator-side code.
    SimFault,
    /// Superseded lenient semantics: any entry matching the filter counts,
    /// regardless of result. Retained for evaluator comparison.
    AnyError,
}

impl AttemptCredit {
    pub fn parse(s: &str) -> Option<AttemptCredit> {
        match s {
            "sim-fault" => Some(AttemptCredit::SimFault),
            "any-error" => Some(AttemptCredit::AnyError),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AttemptCredit::SimFault => "sim-fault",
            AttemptCredit::AnyError => "any-error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluator {
    pub synonyms: SynonymTable,
    pub attempt_credit: AttemptCredit,
}

impl Default for Evaluator {
    fn default() -> Evaluator {
        Evaluator {
            synonyms: SynonymTable::embedded(),
            attempt_credit: AttemptCredit::SimFault,
        }
    }
}

/// Per-atom evidence attached to a world_state verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AtomEvidence {
    /// Qualifying audit seq numbers.
    Matches { seqs: Vec<u64> },
    /// Absence proof: the scanned seq range contained no qualifying entry.
    EmptyScan { scanned_from: u64, scanned_to: u64 },
    /// First qualifying occurrences for an ordering atom.
    Ordered {
        first_seq: Option<u64>,
        second_seq: Option<u64>,
    },
    /// Final-state probe.
    StateCheck {
        path: String,
        actual: Option<String>,
        expected: String,
    },
    /// Pattern match span in the final assistant turn.
    PatternSpan { start: usize, end: usize },
    /// Pattern miss.
    NoMatch,
    /// Judge-provided evidence text.
    JudgeText { text: String },
}

impl Evaluator {
    /// Entry qualifies for a plain CONTAINS (ok only).
    fn entry_ok_match(&self, entry: &AuditEntry, filter: &ToolFilter) -> bool {
        entry.is_ok() && self.filter_matches(entry, filter)
    }

    /// Entry qualifies as an attempt under the active credit policy.
    fn entry_attempt_match(&self, entry: &AuditEntry, filter: &ToolFilter) -> bool {
        if !self.filter_matches(entry, filter) {
            return false;
        }
        match self.attempt_credit {
            AttemptCredit::AnyError => true,
            AttemptCredit::SimFault => {
                entry.is_ok() || entry.error_code.map_or(false, |c| c.is_simulator_side())
            }
        }
    }

    pub fn filter_matches(&self, entry: &AuditEntry, filter: &ToolFilter) -> bool {
        entry.tool == filter.tool && self.params_match(entry, &filter.filters)
    }

    fn params_match(&self, entry: &AuditEntry, filters: &[ParamFilter]) -> bool {
        filters.iter().all(|f| {
            entry
                .params
                .get(&f.field)
                .map(json_canonical)
                .map_or(false, |actual| {
                    self.synonyms.matches(&f.field, &f.value, &actual)
                })
        })
    }

    fn qualifying_seqs(&self, audit: &[AuditEntry], filter: &ToolFilter, attempt: bool) -> Vec<u64> {
        audit
            .iter()
            .filter(|e| {
                if attempt {
                    self.entry_attempt_match(e, filter)
                } else {
                    self.entry_ok_match(e, filter)
                }
            })
            .map(|e| e.seq)
            .collect()
    }

    fn scan_range(audit: &[AuditEntry]) -> (u64, u64) {
        (1, audit.len() as u64)
    }

    fn eval_atom(&self, atom: &Atom, traj: &Trajectory, world: &WorldState) -> (bool, AtomEvidence) {
        match atom {
            Atom::Contains {
                negated,
                attempt,
                filter,
            } => {
                let seqs = self.qualifying_seqs(&traj.audit, filter, *attempt);
                let (from, to) = Self::scan_range(&traj.audit);
                if seqs.is_empty() {
                    (
                        *negated,
                        AtomEvidence::EmptyScan {
                            scanned_from: from,
                            scanned_to: to,
                        },
                    )
                } else {
                    (!*negated, AtomEvidence::Matches { seqs })
                }
            }
            Atom::Ordered { first, second } => {
                let first_seq = self.qualifying_seqs(&traj.audit, first, false).first().copied();
                let second_seq = self
                    .qualifying_seqs(&traj.audit, second, false)
                    .first()
                    .copied();
                let satisfied = matches!((first_seq, second_seq), (Some(a), Some(b)) if a < b);
                (
                    satisfied,
                    AtomEvidence::Ordered {
                        first_seq,
                        second_seq,
                    },
                )
            }
            Atom::FinalState { path, cmp, value } => {
                let actual = resolve_state_path(world, path);
                let satisfied = actual
                    .as_deref()
                    .map_or(false, |a| compare(a, *cmp, value));
                (
                    satisfied,
                    AtomEvidence::StateCheck {
                        path: path.clone(),
                        actual,
                        expected: format!("{} {}", cmp.as_str(), value),
                    },
                )
            }
        }
    }

    /// Evaluate a world_state predicate. Pure in (trajectory, final state);
    /// parse errors are the only error mode and happen before this point.
    pub fn eval_world_state(
        &self,
        criterion_id: &str,
        pred: &PredicateExpr,
        traj: &Trajectory,
        world: &WorldState,
    ) -> Verdict {
        let mut satisfied = true;
        let mut evidence = Vec::with_capacity(pred.atoms.len());
        for atom in &pred.atoms {
            let (ok, ev) = self.eval_atom(atom, traj, world);
            satisfied &= ok;
            evidence.push(ev);
        }
        Verdict {
            criterion_id: criterion_id.to_string(),
            satisfied,
            method: Method::WorldState,
            evidence,
        }
    }
}

fn json_canonical(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => canonicalize(s),
        other => canonicalize(&other.to_string()),
    }
}

fn compare(actual: &str, cmp: Cmp, expected: &str) -> bool {
    let actual_c = canonicalize(actual);
    let expected_c = canonicalize(expected);
    if let (Ok(a), Ok(b)) = (actual_c.parse::<f64>(), expected_c.parse::<f64>()) {
        return match cmp {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
        };
    }
    match cmp {
        Cmp::Eq => actual_c == expected_c,
        Cmp::Ne => actual_c != expected_c,
        // Ordering comparisons are defined for numeric values only.
        _ => false,
    }
}

/// Resolve `entity-id.field`. For beds, `status` and `occupant` consult the
/// ledger; for other entities the attribute map is checked first, then the
/// reference list.
fn resolve_state_path(world: &WorldState, path: &str) -> Option<String> {
    let (entity_id, field) = path.split_once('.')?;
    let entity = world.entity(entity_id)?;
    if entity.kind == EntityKind::Bed {
        match (field, world.bed_status(entity_id)) {
            ("status", Some(status)) => return Some(status.label().to_string()),
            ("occupant", Some(BedStatus::Occupied { encounter_id })) => {
                return Some(encounter_id.clone())
            }
            ("occupant", Some(BedStatus::Free)) => return Some("none".to_string()),
            _ => {}
        }
    }
    if let Some(value) = entity.attr(field) {
        return Some(value.canonical());
    }
    entity.reference(field).map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Trajectory;
    use crate::world::{ErrorCode, ResultSummary};
    use std::collections::BTreeMap;

    fn entry(seq: u64, tool: &str, params: &[(&str, &str)], code: Option<ErrorCode>) -> AuditEntry {
        AuditEntry {
            seq,
            clock: 0,
            tool: tool.to_string(),
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
                .collect(),
            result_summary: if code.is_some() {
                ResultSummary::Error
            } else {
                ResultSummary::Ok
            },
            error_code: code,
            mutation_delta: None,
        }
    }

    fn traj(audit: Vec<AuditEntry>) -> Trajectory {
        Trajectory::for_tests("task", "agent", 1, 42, audit)
    }

    fn eval(pred: &str, traj: &Trajectory) -> Verdict {
        let world = crate::world::WorldState::generate(
            42,
            &crate::world::GenerationProfile::desk(),
        )
        .unwrap();
        Evaluator::default().eval_world_state(
            "c1",
            &PredicateExpr::parse(pred).unwrap(),
            traj,
            &world,
        )
    }

    #[test]
    fn contains_matches_only_ok_entries() {
        let t = traj(vec![
            entry(
                1,
                "createClinicalOrder",
                &[("medication", "heparin")],
                Some(ErrorCode::MissingParam),
            ),
            entry(2, "createClinicalOrder", &[("medication", "heparin")], None),
        ]);
        let verdict = eval("CONTAINS createClinicalOrder WITH medication=anticoagulant", &t);
        assert!(verdict.satisfied);
        assert_eq!(verdict.evidence, vec![AtomEvidence::Matches { seqs: vec![2] }]);

        let negated = eval("NOT CONTAINS createClinicalOrder WITH medication=anticoagulant", &t);
        assert!(!negated.satisfied);
        // The counterexample seq is the evidence for a failed restraint.
        assert_eq!(negated.evidence, vec![AtomEvidence::Matches { seqs: vec![2] }]);
    }

    #[test]
    fn restraint_satisfied_records_empty_scan() {
        let t = traj(vec![entry(1, "getEncounterDetails", &[], None)]);
        let verdict = eval("NOT CONTAINS createClinicalOrder WITH medication=tpa", &t);
        assert!(verdict.satisfied);
        assert_eq!(
            verdict.evidence,
            vec![AtomEvidence::EmptyScan {
                scanned_from: 1,
                scanned_to: 1
            }]
        );
    }

    #[test]
    fn attempt_credits_allowlisted_faults_only() {
        let allowlisted = traj(vec![entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            Some(ErrorCode::UnknownTaskType),
        )]);
        let malformed = traj(vec![entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            Some(ErrorCode::MissingParam),
        )]);
        let ok = traj(vec![entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            None,
        )]);
        let pred = "CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin";
        assert!(eval(pred, &allowlisted).satisfied);
        assert!(!eval(pred, &malformed).satisfied);
        assert!(eval(pred, &ok).satisfied);
        // Plain CONTAINS on the faulted trajectory stays unsatisfied.
        assert!(!eval("CONTAINS createClinicalOrder WITH task_type=blood_admin", &allowlisted).satisfied);
    }

    #[test]
    fn any_error_credit_is_lenient() {
        let malformed = traj(vec![entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            Some(ErrorCode::MissingParam),
        )]);
        let mut evaluator = Evaluator::default();
        evaluator.attempt_credit = AttemptCredit::AnyError;
        let pred =
            PredicateExpr::parse("CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin")
                .unwrap();
        let world =
            crate::world::WorldState::generate(42, &crate::world::GenerationProfile::desk())
                .unwrap();
        let verdict = evaluator.eval_world_state("c1", &pred, &malformed, &world);
        assert!(verdict.satisfied);
    }

    #[test]
    fn ordered_compares_first_occurrences() {
        let t = traj(vec![
            entry(1, "handshake", &[], None),
            entry(2, "transferComplete", &[], None),
        ]);
        assert!(eval("ORDERED handshake BEFORE transferComplete", &t).satisfied);
        let reversed = traj(vec![
            entry(1, "transferComplete", &[], None),
            entry(2, "handshake", &[], None),
        ]);
        assert!(!eval("ORDERED handshake BEFORE transferComplete", &reversed).satisfied);
        let missing = traj(vec![entry(1, "handshake", &[], None)]);
        let verdict = eval("ORDERED handshake BEFORE transferComplete", &missing);
        assert!(!verdict.satisfied);
        assert_eq!(
            verdict.evidence,
            vec![AtomEvidence::Ordered {
                first_seq: Some(1),
                second_seq: None
            }]
        );
    }

    #[test]
    fn final_state_resolves_entities_and_beds() {
        let world =
            crate::world::WorldState::generate(42, &crate::world::GenerationProfile::desk())
                .unwrap();
        let enc = world
            .entities_of(EntityKind::Encounter)
            .find(|e| e.reference("bed_id").is_some())
            .unwrap();
        let bed = enc.reference("bed_id").unwrap();
        let t = traj(vec![]);
        let evaluator = Evaluator::default();

        let pred = PredicateExpr::parse(&format!("FINAL_STATE {}.status = active", enc.id)).unwrap();
        assert!(evaluator.eval_world_state("c", &pred, &t, &world).satisfied);

        let pred = PredicateExpr::parse(&format!("FINAL_STATE {bed}.status = occupied")).unwrap();
        assert!(evaluator.eval_world_state("c", &pred, &t, &world).satisfied);

        let pred = PredicateExpr::parse(&format!("FINAL_STATE {bed}.occupant = {}", enc.id)).unwrap();
        assert!(evaluator.eval_world_state("c", &pred, &t, &world).satisfied);

        let pred = PredicateExpr::parse("FINAL_STATE enc-9999.status = active").unwrap();
        let verdict = evaluator.eval_world_state("c", &pred, &t, &world);
        assert!(!verdict.satisfied);
        assert_eq!(
            verdict.evidence,
            vec![AtomEvidence::StateCheck {
                path: "enc-9999.status".into(),
                actual: None,
                expected: "= active".into()
            }]
        );
    }

    #[test]
    fn numeric_comparison_on_final_state() {
        let world =
            crate::world::WorldState::generate(42, &crate::world::GenerationProfile::desk())
                .unwrap();
        let enc = world.entities_of(EntityKind::Encounter).next().unwrap();
        let level = enc.attr("triage_level").unwrap().canonical();
        let t = traj(vec![]);
        let pred =
            PredicateExpr::parse(&format!("FINAL_STATE {}.triage_level >= {level}", enc.id))
                .unwrap();
        assert!(Evaluator::default()
            .eval_world_state("c", &pred, &t, &world)
            .satisfied);
    }

    #[test]
    fn conjunction_requires_all_atoms() {
        let t = traj(vec![entry(1, "searchPatients", &[("name", "chen")], None)]);
        let verdict = eval(
            "CONTAINS searchPatients AND CONTAINS getEncounterDetails",
            &t,
        );
        assert!(!verdict.satisfied);
        assert_eq!(verdict.evidence.len(), 2);
    }
}
