//! Graph invariant checks. Violations are data, not errors: an empty list
//! means the state is sound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::entity::{edge_schema_for, AttrValue, EntityKind, EDGE_SCHEMA};
use super::{BedStatus, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Name of the invariant that failed.
    pub invariant: String,
    /// Entities involved.
    pub entity_ids: Vec<String>,
    /// What should have held.
    pub expected: String,
}

impl Violation {
    fn new(invariant: &str, entity_ids: Vec<String>, expected: String) -> Violation {
        Violation {
            invariant: invariant.to_string(),
            entity_ids,
            expected,
        }
    }
}

pub fn check_invariants(state: &WorldState) -> Vec<Violation> {
    let mut violations = Vec::new();
    check_references(state, &mut violations);
    check_required_edges(state, &mut violations);
    check_bed_conservation(state, &mut violations);
    check_table_keys(state, &mut violations);
    violations
}

fn check_references(state: &WorldState, out: &mut Vec<Violation>) {
    for kind in EntityKind::ALL {
        for entity in state.entities_of(kind) {
            for (field, target) in &entity.references {
                let Some(schema) = edge_schema_for(kind, field) else {
                    out.push(Violation::new(
                        "unknown-reference-field",
                        vec![entity.id.clone()],
                        format!("no edge {field:?} is defined for kind {kind}"),
                    ));
                    continue;
                };
                match state.entity(target) {
                    None => out.push(Violation::new(
                        "dangling-reference",
                        vec![entity.id.clone(), target.clone()],
                        format!("{}.{} must resolve to an existing entity", entity.id, field),
                    )),
                    Some(resolved) if resolved.kind != schema.target => {
                        out.push(Violation::new(
                            "wrong-kind-reference",
                            vec![entity.id.clone(), target.clone()],
                            format!(
                                "{}.{} must reference kind {}, found {}",
                                entity.id, field, schema.target, resolved.kind
                            ),
                        ))
                    }
                    Some(_) => {}
                }
            }
            for (name, attr) in &entity.attributes {
                if let AttrValue::Ref(target) = &attr.value {
                    if state.entity(target).is_none() {
                        out.push(Violation::new(
                            "dangling-reference",
                            vec![entity.id.clone(), target.clone()],
                            format!("attribute {}.{} must resolve", entity.id, name),
                        ));
                    }
                }
            }
        }
    }
}

fn check_required_edges(state: &WorldState, out: &mut Vec<Violation>) {
    for schema in EDGE_SCHEMA.iter().filter(|s| s.required) {
        for entity in state.entities_of(schema.source) {
            if entity.reference(schema.field).is_none() {
                out.push(Violation::new(
                    "missing-required-reference",
                    vec![entity.id.clone()],
                    format!("every {} must carry {}", schema.source, schema.field),
                ));
            }
        }
    }
}

fn check_bed_conservation(state: &WorldState, out: &mut Vec<Violation>) {
    // Occupied ledger entries and bed-holding encounters must agree exactly.
    let mut holders: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for enc in state.entities_of(EntityKind::Encounter) {
        if let Some(bed) = enc.reference("bed_id") {
            holders.entry(bed.to_string()).or_default().push(enc.id.clone());
        }
    }

    for (bed_id, encs) in &holders {
        if encs.len() > 1 {
            let mut ids = vec![bed_id.clone()];
            ids.extend(encs.iter().cloned());
            out.push(Violation::new(
                "bed-conservation",
                ids,
                format!("bed {bed_id} is referenced by more than one encounter"),
            ));
        }
        match state.bed_status(bed_id) {
            Some(BedStatus::Occupied { encounter_id }) if encs.contains(encounter_id) => {}
            _ => out.push(Violation::new(
                "bed-conservation",
                vec![bed_id.clone()],
                format!("ledger must mark {bed_id} occupied by its referencing encounter"),
            )),
        }
    }

    for (bed_id, status) in state.bed_ledger() {
        if let BedStatus::Occupied { encounter_id } = status {
            let holds = state
                .entity_of(EntityKind::Encounter, encounter_id)
                .map_or(false, |e| e.reference("bed_id") == Some(bed_id.as_str()));
            if !holds {
                out.push(Violation::new(
                    "bed-conservation",
                    vec![bed_id.clone(), encounter_id.clone()],
                    format!("ledger marks {bed_id} occupied by {encounter_id} which does not hold it"),
                ));
            }
        }
    }

    let occupied = state.occupied_bed_count();
    let holding = holders.len();
    if occupied != holding {
        out.push(Violation::new(
            "bed-conservation",
            vec![],
            format!("occupied beds ({occupied}) must equal bed-holding encounters ({holding})"),
        ));
    }
}

fn check_table_keys(state: &WorldState, out: &mut Vec<Violation>) {
    for kind in EntityKind::ALL {
        for entity in state.entities_of(kind) {
            if entity.kind != kind {
                out.push(Violation::new(
                    "table-kind-mismatch",
                    vec![entity.id.clone()],
                    format!("entity stored in {kind} table claims kind {}", entity.kind),
                ));
            }
        }
    }
}
