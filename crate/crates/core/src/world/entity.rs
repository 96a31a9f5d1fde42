//! Entity-graph primitives: the 14 entity kinds, typed attribute values and
//! the reference edge schema.

use std::fmt;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The fourteen kinds of entity a world can hold.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Patient,
    Encounter,
    Bed,
    Staff,
    ClinicalTask,
    TreatmentPlan,
    Protocol,
    DecisionRule,
    Condition,
    Medication,
    Supply,
    Insurance,
    ReferenceMaterial,
    TransferRecord,
}

impl EntityKind {
    pub const ALL: [EntityKind; 14] = [
        EntityKind::Patient,
        EntityKind::Encounter,
        EntityKind::Bed,
        EntityKind::Staff,
        EntityKind::ClinicalTask,
        EntityKind::TreatmentPlan,
        EntityKind::Protocol,
        EntityKind::DecisionRule,
        EntityKind::Condition,
        EntityKind::Medication,
        EntityKind::Supply,
        EntityKind::Insurance,
        EntityKind::ReferenceMaterial,
        EntityKind::TransferRecord,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityKind::Patient => "patient",
            EntityKind::Encounter => "encounter",
            EntityKind::Bed => "bed",
            EntityKind::Staff => "staff",
            EntityKind::ClinicalTask => "clinical_task",
            EntityKind::TreatmentPlan => "treatment_plan",
            EntityKind::Protocol => "protocol",
            EntityKind::DecisionRule => "decision_rule",
            EntityKind::Condition => "condition",
            EntityKind::Medication => "medication",
            EntityKind::Supply => "supply",
            EntityKind::Insurance => "insurance",
            EntityKind::ReferenceMaterial => "reference_material",
            EntityKind::TransferRecord => "transfer_record",
        }
    }

    /// Prefix used when minting ids for entities of this kind.
    pub fn id_prefix(&self) -> &'static str {
        match self {
            EntityKind::Patient => "pat",
            EntityKind::Encounter => "enc",
            EntityKind::Bed => "bed",
            EntityKind::Staff => "stf",
            EntityKind::ClinicalTask => "tsk",
            EntityKind::TreatmentPlan => "pln",
            EntityKind::Protocol => "pro",
            EntityKind::DecisionRule => "rul",
            EntityKind::Condition => "con",
            EntityKind::Medication => "med",
            EntityKind::Supply => "sup",
            EntityKind::Insurance => "ins",
            EntityKind::ReferenceMaterial => "ref",
            EntityKind::TransferRecord => "xfr",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrValue {
    Str(String),
    Num(i64),
    /// Simulated timestamp, seconds since the simulated epoch.
    Ts(i64),
    /// Opaque terminology code.
    Code(String),
    /// Reference held as a plain attribute (graph edges normally live in
    /// [`Entity::references`]).
    Ref(String),
}

impl AttrValue {
    /// Canonical string rendering used for predicate comparison and display.
    pub fn canonical(&self) -> String {
        match self {
            AttrValue::Str(s) | AttrValue::Code(s) | AttrValue::Ref(s) => s.clone(),
            AttrValue::Num(n) | AttrValue::Ts(n) => n.to_string(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            AttrValue::Str(s) | AttrValue::Code(s) | AttrValue::Ref(s) => {
                serde_json::Value::String(s.clone())
            }
            AttrValue::Num(n) | AttrValue::Ts(n) => serde_json::Value::from(*n),
        }
    }
}

/// One attribute slot. `visible_at` gates read-tool rendering: the attribute
/// is suppressed while the world clock is earlier than the gate (stale-data
/// noise).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub value: AttrValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_at: Option<i64>,
}

impl Attribute {
    pub fn new(value: AttrValue) -> Self {
        Attribute {
            value,
            visible_at: None,
        }
    }

    pub fn visible(&self, clock: i64) -> bool {
        self.visible_at.map_or(true, |gate| gate <= clock)
    }
}

/// One node of the entity graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub attributes: BTreeMap<String, Attribute>,
    /// Graph edges as (field-name, target-entity-id).
    pub references: Vec<(String, String)>,
}

impl Entity {
    pub fn new(id: impl Into<String>, kind: EntityKind) -> Self {
        Entity {
            id: id.into(),
            kind,
            attributes: BTreeMap::new(),
            references: Vec::new(),
        }
    }

    pub fn with_attr(mut self, name: &str, value: AttrValue) -> Self {
        self.attributes
            .insert(name.to_string(), Attribute::new(value));
        self
    }

    pub fn with_ref(mut self, field: &str, target: impl Into<String>) -> Self {
        self.references.push((field.to_string(), target.into()));
        self
    }

    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        self.attributes.get(name).map(|a| &a.value)
    }

    pub fn reference(&self, field: &str) -> Option<&str> {
        self.references
            .iter()
            .find(|(f, _)| f == field)
            .map(|(_, t)| t.as_str())
    }

    pub fn set_reference(&mut self, field: &str, target: Option<String>) {
        self.references.retain(|(f, _)| f != field);
        if let Some(t) = target {
            self.references.push((field.to_string(), t));
            self.references.sort();
        }
    }
}

/// One row of the reference edge schema: entities of `source` may (or must)
/// carry a reference named `field` targeting an entity of `target` kind.
pub struct EdgeSchema {
    pub source: EntityKind,
    pub field: &'static str,
    pub target: EntityKind,
    pub required: bool,
}

/// The fixed edge schema of the entity graph.
pub const EDGE_SCHEMA: &[EdgeSchema] = &[
    EdgeSchema {
        source: EntityKind::Encounter,
        field: "patient_id",
        target: EntityKind::Patient,
        required: true,
    },
    EdgeSchema {
        source: EntityKind::Encounter,
        field: "bed_id",
        target: EntityKind::Bed,
        required: false,
    },
    EdgeSchema {
        source: EntityKind::ClinicalTask,
        field: "encounter_id",
        target: EntityKind::Encounter,
        required: true,
    },
    EdgeSchema {
        source: EntityKind::ClinicalTask,
        field: "staff_id",
        target: EntityKind::Staff,
        required: false,
    },
    EdgeSchema {
        source: EntityKind::TreatmentPlan,
        field: "encounter_id",
        target: EntityKind::Encounter,
        required: true,
    },
    EdgeSchema {
        source: EntityKind::TreatmentPlan,
        field: "condition_id",
        target: EntityKind::Condition,
        required: true,
    },
    EdgeSchema {
        source: EntityKind::TreatmentPlan,
        field: "medication_id",
        target: EntityKind::Medication,
        required: false,
    },
    EdgeSchema {
        source: EntityKind::Protocol,
        field: "condition_id",
        target: EntityKind::Condition,
        required: true,
    },
    EdgeSchema {
        source: EntityKind::DecisionRule,
        field: "condition_id",
        target: EntityKind::Condition,
        required: true,
    },
    EdgeSchema {
        source: EntityKind::Medication,
        field: "supply_id",
        target: EntityKind::Supply,
        required: false,
    },
    EdgeSchema {
        source: EntityKind::Patient,
        field: "insurance_id",
        target: EntityKind::Insurance,
        required: false,
    },
    EdgeSchema {
        source: EntityKind::Condition,
        field: "reference_id",
        target: EntityKind::ReferenceMaterial,
        required: false,
    },
    EdgeSchema {
        source: EntityKind::TransferRecord,
        field: "encounter_id",
        target: EntityKind::Encounter,
        required: true,
    },
];

/// Look up the schema row for a (kind, field) pair.
pub fn edge_schema_for(kind: EntityKind, field: &str) -> Option<&'static EdgeSchema> {
    EDGE_SCHEMA
        .iter()
        .find(|e| e.source == kind && e.field == field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_fourteen_kinds() {
        assert_eq!(EntityKind::ALL.len(), 14);
        let mut prefixes: Vec<_> = EntityKind::ALL.iter().map(|k| k.id_prefix()).collect();
        prefixes.sort_unstable();
        prefixes.dedup();
        assert_eq!(prefixes.len(), 14, "id prefixes must be distinct");
    }

    #[test]
    fn required_edges_cover_encounter_patient() {
        let row = edge_schema_for(EntityKind::Encounter, "patient_id").unwrap();
        assert!(row.required);
        assert_eq!(row.target, EntityKind::Patient);
    }
}
