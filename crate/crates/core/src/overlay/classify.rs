//! Six-label disagreement classifier, applied in fixed priority order:
//! overlay_wrong_entity, infrastructure_error, judge_hallucination,
//! intent_execution_split, vocab_gap, conditional_logic. The first matching
//! rule wins; a disagreement matching none of the rules is attributed to the
//! judge (the residual class of verdicts contradicted by deterministic
//! evidence).

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::harness::Trajectory;
use crate::rubric::{Atom, AtomEvidence, Evaluator, PredicateExpr, ToolFilter};
use crate::world::AuditEntry;

use super::OverlayEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementLabel {
    OverlayWrongEntity,
    InfrastructureError,
    JudgeHallucination,
    IntentExecutionSplit,
    VocabGap,
    ConditionalLogic,
}

impl DisagreementLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            DisagreementLabel::OverlayWrongEntity => "overlay_wrong_entity",
            DisagreementLabel::InfrastructureError => "infrastructure_error",
            DisagreementLabel::JudgeHallucination => "judge_hallucination",
            DisagreementLabel::IntentExecutionSplit => "intent_execution_split",
            DisagreementLabel::VocabGap => "vocab_gap",
            DisagreementLabel::ConditionalLogic => "conditional_logic",
        }
    }
}

impl fmt::Display for DisagreementLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub struct ClassifyInput<'a> {
    pub entry: &'a OverlayEntry,
    /// Assertion text of the audited criterion.
    pub assertion: &'a str,
    pub reference_verdict: bool,
    pub overlay_verdict: bool,
    pub overlay_evidence: &'a [AtomEvidence],
    pub traj: &'a Trajectory,
    pub evaluator: &'a Evaluator,
}

/// Concept keyword table for wrong-entity detection. The first concept (in
/// listed order) whose keyword appears in the assertion text is the
/// assertion's declared target.
const CONCEPT_KEYWORDS: &[(&str, &[&str])] = &[
    ("blood_culture", &["blood culture", "culture"]),
    ("blood_product", &["blood product", "transfusion", "blood_admin", "blood bank"]),
    ("imaging", &["imaging", "ct ", " ct", "x-ray", "radiograph", "scan"]),
    ("anticoagulation", &["anticoagul", "heparin", "warfarin"]),
    ("thrombolytic", &["thrombolytic", "thrombolysis", "tpa", "alteplase"]),
    ("insulin", &["insulin"]),
    ("discharge", &["discharge"]),
    ("transfer", &["transfer", "handshake"]),
    ("decision_rule", &["decision rule", "risk score"]),
    ("medication", &["medication", "order", "dose"]),
];

/// Derive the concept an assertion talks about, if any.
pub fn assertion_concept(assertion: &str) -> Option<&'static str> {
    let lower = assertion.to_lowercase();
    CONCEPT_KEYWORDS
        .iter()
        .find(|(_, keywords)| keywords.iter().any(|k| lower.contains(k)))
        .map(|(concept, _)| *concept)
}

fn conditional_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(if|unless|when)\b|only after").expect("static regex compiles")
    })
}

fn positive_atoms(pred: &PredicateExpr) -> Vec<&ToolFilter> {
    pred.atoms
        .iter()
        .filter_map(|a| match a {
            Atom::Contains {
                negated: false,
                filter,
                ..
            } => Some(filter),
            _ => None,
        })
        .collect()
}

fn restraint_atoms(pred: &PredicateExpr) -> Vec<&ToolFilter> {
    pred.atoms
        .iter()
        .filter_map(|a| match a {
            Atom::Contains {
                negated: true,
                filter,
                ..
            } => Some(filter),
            _ => None,
        })
        .collect()
}

fn entry_is_attemptable(e: &AuditEntry) -> bool {
    e.is_ok() || e.error_code.map_or(false, |c| c.is_simulator_side())
}

/// Assign exactly one label to a disagreeing observation.
pub fn classify_disagreement(input: &ClassifyInput<'_>) -> DisagreementLabel {
    let audit = &input.traj.audit;
    let pred = &input.entry.predicate;
    let judge = input.reference_verdict;
    let evaluator = input.evaluator;

    // (1) Declared target concept inconsistent with the assertion's concept.
    if let (Some(target), Some(found)) = (
        input.entry.target_concept.as_deref(),
        assertion_concept(input.assertion),
    ) {
        if target != found {
            return DisagreementLabel::OverlayWrongEntity;
        }
    }

    // (2) Overlay PASS whose qualifying evidence is an allowlisted simulator
    // error: the rescue itself is the disagreement.
    if input.overlay_verdict {
        let rescued = input.overlay_evidence.iter().any(|ev| match ev {
            AtomEvidence::Matches { seqs } => seqs.iter().any(|seq| {
                audit
                    .iter()
                    .find(|e| e.seq == *seq)
                    .map_or(false, |e| !e.is_ok() && e.error_code.map_or(false, |c| c.is_simulator_side()))
            }),
            _ => false,
        });
        if rescued {
            return DisagreementLabel::InfrastructureError;
        }
    }

    let positives = positive_atoms(pred);
    let restraints = restraint_atoms(pred);
    let pure_restraint = pred.is_pure_restraint();

    let pred_ok = |filter: &ToolFilter| audit.iter().any(|e| e.is_ok() && evaluator.filter_matches(e, filter));
    let pred_attempt = |filter: &ToolFilter| {
        audit
            .iter()
            .any(|e| entry_is_attemptable(e) && evaluator.filter_matches(e, filter))
    };
    let tool_activity = |filter: &ToolFilter| {
        audit
            .iter()
            .any(|e| e.tool == filter.tool && entry_is_attemptable(e))
    };

    // (3) Judge verdict refuted by the audit log.
    let hallucinated = if pure_restraint {
        let violation_present = restraints.iter().any(|f| pred_ok(f));
        // PASS claiming restraint the log refutes, or FAIL claiming a
        // violation the log does not contain.
        (judge && violation_present) || (!judge && !violation_present)
    } else if judge {
        // PASS with zero relevant activity: no successful matching calls and
        // no attempt-qualifying calls of the predicate's tools at all.
        !positives.is_empty() && positives.iter().all(|f| !pred_ok(f) && !tool_activity(f))
    } else {
        // FAIL while the predicate's required calls verifiably succeeded.
        !positives.is_empty() && positives.iter().all(|f| pred_ok(f))
    };
    if hallucinated {
        return DisagreementLabel::JudgeHallucination;
    }

    // (4) Attempt evidence without completion; the judge graded intent.
    if judge
        && !positives.is_empty()
        && positives.iter().all(|f| !pred_ok(f))
        && positives.iter().any(|f| pred_attempt(f))
    {
        return DisagreementLabel::IntentExecutionSplit;
    }

    // (5) Synonym-table near-miss on a class-valued field: an entry matches
    // the tool and every non-class filter but differs on a class-valued one.
    let near_miss = positives.iter().any(|filter| {
        let (syn, plain): (Vec<_>, Vec<_>) = filter
            .filters
            .iter()
            .partition(|f| evaluator.synonyms.covers_field(&f.field));
        if syn.is_empty() {
            return false;
        }
        audit.iter().any(|e| {
            if e.tool != filter.tool || !entry_is_attemptable(e) {
                return false;
            }
            let plain_match = plain.iter().all(|f| {
                e.params
                    .get(&f.field)
                    .map(|v| {
                        evaluator
                            .synonyms
                            .matches(&f.field, &f.value, &json_str(v))
                    })
                    .unwrap_or(false)
            });
            let syn_differs = syn.iter().any(|f| {
                e.params
                    .get(&f.field)
                    .map(|v| {
                        !evaluator
                            .synonyms
                            .matches(&f.field, &f.value, &json_str(v))
                    })
                    .unwrap_or(false)
            });
            plain_match && syn_differs
        })
    });
    if near_miss {
        return DisagreementLabel::VocabGap;
    }

    // (6) Conditional clause the predicate language cannot encode.
    if conditional_marker().is_match(&input.assertion.to_lowercase()) {
        return DisagreementLabel::ConditionalLogic;
    }

    // Residual: a verdict pair not explained by any overlay-side fault is
    // attributed to the judge.
    DisagreementLabel::JudgeHallucination
}

fn json_str(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rubric::PredicateExpr;
    use crate::tasks::Category;
    use crate::world::{ErrorCode, ResultSummary};
    use std::collections::BTreeMap;

    fn entry_with(predicate: &str, target: Option<&str>) -> OverlayEntry {
        OverlayEntry {
            criterion_id: "c".into(),
            predicate: PredicateExpr::parse(predicate).unwrap(),
            confidence: super::super::Confidence::High,
            intent_rescue_reason: Some("attested".into()),
            category: Category::SafetyCriticalJudgment,
            target_concept: target.map(str::to_string),
        }
    }

    fn audit_entry(
        seq: u64,
        tool: &str,
        params: &[(&str, &str)],
        code: Option<ErrorCode>,
    ) -> AuditEntry {
        AuditEntry {
            seq,
            clock: 0,
            tool: tool.into(),
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

    fn classify(
        entry: &OverlayEntry,
        assertion: &str,
        judge: bool,
        overlay: bool,
        evidence: Vec<AtomEvidence>,
        audit: Vec<AuditEntry>,
    ) -> DisagreementLabel {
        let traj = Trajectory::for_tests("t", "a", 1, 42, audit);
        let evaluator = Evaluator::default();
        classify_disagreement(&ClassifyInput {
            entry,
            assertion,
            reference_verdict: judge,
            overlay_verdict: overlay,
            overlay_evidence: &evidence,
            traj: &traj,
            evaluator: &evaluator,
        })
    }

    #[test]
    fn judge_pass_with_empty_log_is_hallucination() {
        let entry = entry_with("CONTAINS createClinicalOrder WITH medication=anticoagulant", None);
        let label = classify(
            &entry,
            "agent ordered anticoagulation",
            true,
            false,
            vec![],
            vec![audit_entry(1, "searchPatients", &[("name", "x")], None)],
        );
        assert_eq!(label, DisagreementLabel::JudgeHallucination);
    }

    #[test]
    fn rescued_overlay_pass_is_infrastructure_error() {
        let entry = entry_with(
            "CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin",
            Some("blood_product"),
        );
        let audit = vec![audit_entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            Some(ErrorCode::UnknownTaskType),
        )];
        let label = classify(
            &entry,
            "agent attempted blood product transfusion order",
            false,
            true,
            vec![AtomEvidence::Matches { seqs: vec![1] }],
            audit,
        );
        assert_eq!(label, DisagreementLabel::InfrastructureError);
    }

    #[test]
    fn wrong_entity_outranks_infrastructure_error() {
        // Entry wired to blood products while the assertion concerns blood
        // cultures; evidence would also satisfy rule 2, but rule 1 wins.
        let entry = entry_with(
            "CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin",
            Some("blood_product"),
        );
        let audit = vec![audit_entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            Some(ErrorCode::UnknownTaskType),
        )];
        let label = classify(
            &entry,
            "agent obtained blood cultures before antibiotics",
            false,
            true,
            vec![AtomEvidence::Matches { seqs: vec![1] }],
            audit,
        );
        assert_eq!(label, DisagreementLabel::OverlayWrongEntity);
    }

    #[test]
    fn attempt_without_completion_is_intent_split() {
        // The overlay here uses plain CONTAINS (no rescue); the agent tried
        // and died on a simulator fault; the judge credited intent.
        let entry = entry_with("CONTAINS createClinicalOrder WITH task_type=blood_admin", None);
        let audit = vec![audit_entry(
            1,
            "createClinicalOrder",
            &[("task_type", "blood_admin")],
            Some(ErrorCode::ServiceUnavailable),
        )];
        let label = classify(
            &entry,
            "agent placed the blood product order",
            true,
            false,
            vec![],
            audit,
        );
        assert_eq!(label, DisagreementLabel::IntentExecutionSplit);
    }

    #[test]
    fn medication_near_miss_is_vocab_gap() {
        let entry = entry_with("CONTAINS createClinicalOrder WITH medication=anticoagulant", None);
        // dalteparin is not in the synonym table for anticoagulant.
        let audit = vec![audit_entry(
            1,
            "createClinicalOrder",
            &[("medication", "dalteparin")],
            None,
        )];
        let label = classify(
            &entry,
            "agent started anticoagulation",
            true,
            false,
            vec![],
            audit,
        );
        assert_eq!(label, DisagreementLabel::VocabGap);
    }

    #[test]
    fn conditional_assertion_is_conditional_logic() {
        let entry = entry_with("CONTAINS createClinicalOrder WITH task_type=ecg", None);
        // Activity on the tool exists (so not a hallucination), params do not
        // match, no class-valued field involved, assertion is conditional.
        let audit = vec![audit_entry(
            1,
            "createClinicalOrder",
            &[("task_type", "lab_draw")],
            None,
        )];
        let label = classify(
            &entry,
            "if troponin is elevated, the agent orders an ecg",
            true,
            false,
            vec![],
            audit,
        );
        assert_eq!(label, DisagreementLabel::ConditionalLogic);
    }

    #[test]
    fn restraint_fail_with_clean_log_is_hallucination() {
        let entry = entry_with(
            "NOT CONTAINS createClinicalOrder WITH medication=thrombolytic",
            None,
        );
        let label = classify(
            &entry,
            "agent withheld thrombolytics",
            false,
            true,
            vec![AtomEvidence::EmptyScan {
                scanned_from: 1,
                scanned_to: 1,
            }],
            vec![audit_entry(1, "getEncounterDetails", &[], None)],
        );
        assert_eq!(label, DisagreementLabel::JudgeHallucination);
    }

    #[test]
    fn residual_falls_back_to_judge_attribution() {
        let entry = entry_with("CONTAINS createClinicalOrder WITH task_type=ecg", None);
        // Tool activity exists with wrong params, nothing else matches:
        // non-conditional assertion, no class fields.
        let audit = vec![audit_entry(
            1,
            "createClinicalOrder",
            &[("task_type", "lab_draw")],
            None,
        )];
        let label = classify(&entry, "agent ordered the tracing", true, false, vec![], audit);
        assert_eq!(label, DisagreementLabel::JudgeHallucination);
    }

    #[test]
    fn concept_extraction_prefers_specific_rows() {
        assert_eq!(
            assertion_concept("obtain blood cultures before antibiotics"),
            Some("blood_culture")
        );
        assert_eq!(
            assertion_concept("order the blood product transfusion"),
            Some("blood_product")
        );
        assert_eq!(assertion_concept("completely unrelated text"), None);
    }
}
