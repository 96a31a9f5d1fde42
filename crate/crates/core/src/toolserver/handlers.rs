//! Per-tool handlers. Handlers see an immutable world and return either data
//! or a delta for the dispatcher to commit. Within a handler the check order
//! is: value-domain validation (invalid_params), then entity resolution
//! (not_found), then state conflicts (conflict).

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::world::{
    stable_hash, AttrValue, BedMove, BedStatus, Entity, EntityKind, ErrorCode, FieldUpdate,
    MutationDelta, WorldState, PAGINATION_CAP,
};

use super::{HandlerOutcome, ToolSpec, FACILITY_CAPACITY};

pub(crate) fn run(
    spec: &ToolSpec,
    state: &WorldState,
    params: &BTreeMap<String, Value>,
) -> HandlerOutcome {
    match spec.handler_key().as_str() {
        "search_encounters" => search_encounters(state, params),
        "search_patients" => search_patients(state, params),
        "search_clinical_knowledge" => search_clinical_knowledge(state, params),
        "search_reference_materials" => search_reference_materials(state, params),
        "search_available_resources" => search_available_resources(state, params),
        "get_encounter_details" => get_entity(state, params, "encounter_id", EntityKind::Encounter),
        "get_condition_details" => get_entity(state, params, "condition_id", EntityKind::Condition),
        "get_patient_history" => get_patient_history(state, params),
        "get_protocol_details" => get_entity(state, params, "protocol_id", EntityKind::Protocol),
        "get_transfer_status" => get_transfer_status(state, params),
        "get_insurance_coverage" => get_insurance_coverage(state, params),
        "get_reference_article" => {
            get_entity(state, params, "reference_id", EntityKind::ReferenceMaterial)
        }
        "check_resource_availability" => check_resource_availability(state, params),
        "calculate_transfer_time" => calculate_transfer_time(state, params),
        "run_decision_rule" => run_decision_rule(state, params),
        "validate_treatment_plan" => validate_treatment_plan(state, params),
        "create_clinical_order" => create_clinical_order(state, params),
        "update_task_status" => update_task_status(state, params),
        "update_encounter" => update_encounter(state, params),
        "update_patient_record" => update_patient_record(state, params),
        "register_patient" => register_patient(state, params),
        "apply_protocol" => apply_protocol(state, params),
        "process_discharge" => process_discharge(state, params),
        "process_transfer" => process_transfer(state, params),
        other => HandlerOutcome::Fail {
            code: ErrorCode::NotImplemented,
            message: format!("handler {other} not implemented"),
        },
    }
}

fn fail(code: ErrorCode, message: impl Into<String>) -> HandlerOutcome {
    HandlerOutcome::Fail {
        code,
        message: message.into(),
    }
}

fn str_param<'a>(params: &'a BTreeMap<String, Value>, name: &str) -> &'a str {
    params
        .get(name)
        .and_then(Value::as_str)
        .expect("schema validation guarantees string params")
}

fn opt_str_param<'a>(params: &'a BTreeMap<String, Value>, name: &str) -> Option<&'a str> {
    params.get(name).and_then(Value::as_str)
}

/// Render an entity for tool output, honoring attribute visibility gates.
fn render_entity(state: &WorldState, entity: &Entity) -> Value {
    let clock = state.clock();
    let mut attributes = serde_json::Map::new();
    for (name, attr) in &entity.attributes {
        if attr.visible(clock) {
            attributes.insert(name.clone(), attr.value.to_json());
        }
    }
    let mut references = serde_json::Map::new();
    for (field, target) in &entity.references {
        references.insert(field.clone(), json!(target));
    }
    json!({
        "id": entity.id,
        "kind": entity.kind.as_str(),
        "attributes": attributes,
        "references": references,
    })
}

fn summary(entity: &Entity, label: String) -> Value {
    json!({ "id": entity.id, "label": label })
}

fn label_for(entity: &Entity) -> String {
    for key in ["name", "chief_complaint", "title", "task_type", "carrier", "facility"] {
        if let Some(value) = entity.attr(key) {
            return value.canonical();
        }
    }
    entity.id.clone()
}

/// Sort by id, cap at the pagination limit, emit no continuation marker.
fn paginate(mut items: Vec<(String, Value)>) -> Value {
    items.sort_by(|a, b| a.0.cmp(&b.0));
    items.truncate(PAGINATION_CAP);
    let results: Vec<Value> = items.into_iter().map(|(_, v)| v).collect();
    json!({ "results": results })
}

fn search_encounters(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let patient = opt_str_param(params, "patient_id");
    let status = opt_str_param(params, "status");
    let items = state
        .entities_of(EntityKind::Encounter)
        .filter(|e| patient.map_or(true, |p| e.reference("patient_id") == Some(p)))
        .filter(|e| {
            status.map_or(true, |s| {
                e.attr("status").map(|v| v.canonical()) == Some(s.to_string())
            })
        })
        .map(|e| (e.id.clone(), summary(e, label_for(e))))
        .collect();
    HandlerOutcome::Data(paginate(items))
}

fn search_patients(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let query = str_param(params, "name").to_lowercase();
    let items = state
        .entities_of(EntityKind::Patient)
        .filter(|e| {
            e.attr("name")
                .map(|v| v.canonical().to_lowercase().contains(&query))
                .unwrap_or(false)
        })
        .map(|e| (e.id.clone(), summary(e, label_for(e))))
        .collect();
    HandlerOutcome::Data(paginate(items))
}

fn search_clinical_knowledge(
    state: &WorldState,
    params: &BTreeMap<String, Value>,
) -> HandlerOutcome {
    let query = str_param(params, "query").to_lowercase();
    let items = state
        .entities_of(EntityKind::Condition)
        .filter(|e| {
            ["name", "code", "severity"].iter().any(|key| {
                e.attr(key)
                    .map(|v| v.canonical().to_lowercase().contains(&query))
                    .unwrap_or(false)
            })
        })
        .map(|e| (e.id.clone(), summary(e, label_for(e))))
        .collect();
    HandlerOutcome::Data(paginate(items))
}

fn search_reference_materials(
    state: &WorldState,
    params: &BTreeMap<String, Value>,
) -> HandlerOutcome {
    let query = str_param(params, "query").to_lowercase();
    let items = state
        .entities_of(EntityKind::ReferenceMaterial)
        .filter(|e| {
            ["title", "summary"].iter().any(|key| {
                e.attr(key)
                    .map(|v| v.canonical().to_lowercase().contains(&query))
                    .unwrap_or(false)
            })
        })
        .map(|e| (e.id.clone(), summary(e, label_for(e))))
        .collect();
    HandlerOutcome::Data(paginate(items))
}

fn search_available_resources(
    state: &WorldState,
    params: &BTreeMap<String, Value>,
) -> HandlerOutcome {
    let kind = opt_str_param(params, "kind");
    if let Some(k) = kind {
        if !["bed", "staff", "supply"].contains(&k) {
            return fail(
                ErrorCode::InvalidParams,
                format!("kind must be bed, staff or supply, got {k:?}"),
            );
        }
    }
    let mut items: Vec<(String, Value)> = Vec::new();
    if kind.map_or(true, |k| k == "bed") {
        for entity in state.entities_of(EntityKind::Bed) {
            if matches!(state.bed_status(&entity.id), Some(BedStatus::Free)) {
                items.push((entity.id.clone(), summary(entity, format!("bed {}", entity.id))));
            }
        }
    }
    if kind.map_or(true, |k| k == "staff") {
        for entity in state.entities_of(EntityKind::Staff) {
            if entity.attr("on_shift").map(|v| v.canonical()) == Some("true".into()) {
                items.push((entity.id.clone(), summary(entity, label_for(entity))));
            }
        }
    }
    if kind.map_or(true, |k| k == "supply") {
        for entity in state.entities_of(EntityKind::Supply) {
            let in_stock = matches!(entity.attr("quantity"), Some(AttrValue::Num(n)) if *n > 0);
            if in_stock {
                items.push((entity.id.clone(), summary(entity, label_for(entity))));
            }
        }
    }
    HandlerOutcome::Data(paginate(items))
}

fn get_entity(
    state: &WorldState,
    params: &BTreeMap<String, Value>,
    param: &str,
    kind: EntityKind,
) -> HandlerOutcome {
    let id = str_param(params, param);
    match state.entity_of(kind, id) {
        Some(entity) => {
            let mut data = render_entity(state, entity);
            if kind == EntityKind::Encounter {
                if let Some(bed) = entity.reference("bed_id") {
                    data["bed_status"] = json!(state
                        .bed_status(bed)
                        .map(|s| s.label())
                        .unwrap_or("unknown"));
                }
            }
            HandlerOutcome::Data(data)
        }
        None => fail(ErrorCode::NotFound, format!("no {} with id {id:?}", kind)),
    }
}

fn get_patient_history(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let id = str_param(params, "patient_id");
    let Some(patient) = state.entity_of(EntityKind::Patient, id) else {
        return fail(ErrorCode::NotFound, format!("no patient with id {id:?}"));
    };
    let mut encounter_ids: Vec<String> = state
        .entities_of(EntityKind::Encounter)
        .filter(|e| e.reference("patient_id") == Some(id))
        .map(|e| e.id.clone())
        .collect();
    encounter_ids.sort();
    HandlerOutcome::Data(json!({
        "patient": render_entity(state, patient),
        "encounter_ids": encounter_ids,
    }))
}

fn get_transfer_status(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let id = str_param(params, "encounter_id");
    let Some(encounter) = state.entity_of(EntityKind::Encounter, id) else {
        return fail(ErrorCode::NotFound, format!("no encounter with id {id:?}"));
    };
    let mut records: Vec<(String, Value)> = state
        .entities_of(EntityKind::TransferRecord)
        .filter(|r| r.reference("encounter_id") == Some(id))
        .map(|r| (r.id.clone(), render_entity(state, r)))
        .collect();
    records.sort_by(|a, b| a.0.cmp(&b.0));
    let eligible = encounter.attr("status").map(|s| s.canonical()) == Some("active".into());
    HandlerOutcome::Data(json!({
        "encounter_id": id,
        "eligible": eligible,
        "records": records.into_iter().map(|(_, v)| v).collect::<Vec<_>>(),
    }))
}

fn get_insurance_coverage(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let id = str_param(params, "patient_id");
    let Some(patient) = state.entity_of(EntityKind::Patient, id) else {
        return fail(ErrorCode::NotFound, format!("no patient with id {id:?}"));
    };
    match patient.reference("insurance_id").and_then(|i| state.entity(i)) {
        Some(insurance) => HandlerOutcome::Data(json!({
            "patient_id": id,
            "covered": true,
            "insurance": render_entity(state, insurance),
        })),
        None => HandlerOutcome::Data(json!({
            "patient_id": id,
            "covered": false,
        })),
    }
}

fn check_resource_availability(
    state: &WorldState,
    params: &BTreeMap<String, Value>,
) -> HandlerOutcome {
    let kind = str_param(params, "resource_kind");
    let (total, available) = match kind {
        "bed" => (
            state.entity_count(EntityKind::Bed),
            state
                .bed_ledger()
                .values()
                .filter(|s| matches!(s, BedStatus::Free))
                .count(),
        ),
        "staff" => (
            state.entity_count(EntityKind::Staff),
            state
                .entities_of(EntityKind::Staff)
                .filter(|e| e.attr("on_shift").map(|v| v.canonical()) == Some("true".into()))
                .count(),
        ),
        "supply" => (
            state.entity_count(EntityKind::Supply),
            state
                .entities_of(EntityKind::Supply)
                .filter(|e| matches!(e.attr("quantity"), Some(AttrValue::Num(n)) if *n > 0))
                .count(),
        ),
        other => {
            return fail(
                ErrorCode::InvalidParams,
                format!("resource_kind must be bed, staff or supply, got {other:?}"),
            )
        }
    };
    HandlerOutcome::Data(json!({
        "resource_kind": kind,
        "total": total,
        "available": available,
    }))
}

fn calculate_transfer_time(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let enc_id = str_param(params, "encounter_id");
    let facility = str_param(params, "facility_id");
    if state.entity_of(EntityKind::Encounter, enc_id).is_none() {
        return fail(ErrorCode::NotFound, format!("no encounter with id {enc_id:?}"));
    }
    let minutes = 15 + (stable_hash(&[enc_id, facility]) % 90) as i64;
    HandlerOutcome::Data(json!({
        "encounter_id": enc_id,
        "facility_id": facility,
        "minutes": minutes,
    }))
}

fn run_decision_rule(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let rule_id = str_param(params, "rule_id");
    let Some(rule) = state.entity_of(EntityKind::DecisionRule, rule_id) else {
        return fail(ErrorCode::NotFound, format!("no decision rule with id {rule_id:?}"));
    };
    let factors: Vec<String> = rule
        .attr("factors")
        .map(|v| v.canonical().split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let inputs = params
        .get("inputs")
        .and_then(Value::as_object)
        .expect("schema validation guarantees object");

    for key in inputs.keys() {
        if !factors.iter().any(|f| f == key) {
            return fail(
                ErrorCode::InvalidParams,
                format!("input {key:?} is not a factor of {rule_id}"),
            );
        }
    }
    let mut score = 0i64;
    for factor in &factors {
        match inputs.get(factor) {
            Some(Value::Bool(b)) => {
                if *b {
                    score += 1;
                }
            }
            Some(_) => {
                return fail(
                    ErrorCode::InvalidParams,
                    format!("factor {factor:?} must be a boolean"),
                )
            }
            None => {
                return fail(
                    ErrorCode::InvalidParams,
                    format!("factor {factor:?} is required by {rule_id}"),
                )
            }
        }
    }
    // Stub rules are disjunctive: any positive factor makes the rule positive.
    HandlerOutcome::Data(json!({
        "rule_id": rule_id,
        "result": if score > 0 { "positive" } else { "negative" },
        "score": score,
    }))
}

fn validate_treatment_plan(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let plan_id = str_param(params, "plan_id");
    let Some(plan) = state.entity_of(EntityKind::TreatmentPlan, plan_id) else {
        return fail(ErrorCode::NotFound, format!("no treatment plan with id {plan_id:?}"));
    };
    let mut issues: Vec<String> = Vec::new();
    match plan.reference("encounter_id").and_then(|id| state.entity(id)) {
        Some(enc) => {
            if enc.attr("status").map(|s| s.canonical()) != Some("active".into()) {
                issues.push("encounter is not active".to_string());
            }
        }
        None => issues.push("encounter reference does not resolve".to_string()),
    }
    if plan.reference("condition_id").and_then(|id| state.entity(id)).is_none() {
        issues.push("condition reference does not resolve".to_string());
    }
    HandlerOutcome::Data(json!({
        "plan_id": plan_id,
        "valid": issues.is_empty(),
        "issues": issues,
    }))
}

fn create_clinical_order(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let enc_id = str_param(params, "encounter_id");
    if state.entity_of(EntityKind::Encounter, enc_id).is_none() {
        return fail(ErrorCode::NotFound, format!("no encounter with id {enc_id:?}"));
    }
    let order_id = state.next_id(EntityKind::ClinicalTask);
    let mut entity = Entity::new(order_id.clone(), EntityKind::ClinicalTask)
        .with_attr("task_type", AttrValue::Str(str_param(params, "task_type").into()))
        .with_attr("details", AttrValue::Str(str_param(params, "details").into()))
        .with_attr("status", AttrValue::Str("ordered".into()))
        .with_attr("ordered_at", AttrValue::Ts(state.clock()))
        .with_ref("encounter_id", enc_id);
    if let Some(med) = opt_str_param(params, "medication") {
        entity = entity.with_attr("medication", AttrValue::Str(med.into()));
    }
    if let Some(dose) = opt_str_param(params, "dose") {
        entity = entity.with_attr("dose", AttrValue::Str(dose.into()));
    }
    HandlerOutcome::Mutate {
        data: json!({ "order_id": order_id }),
        delta: MutationDelta {
            created: vec![entity],
            updated: vec![],
            bed_moves: vec![],
        },
    }
}

const TASK_STATUSES: [&str; 4] = ["pending", "in_progress", "complete", "cancelled"];

fn update_task_status(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let status = str_param(params, "status");
    if !TASK_STATUSES.contains(&status) {
        return fail(
            ErrorCode::InvalidParams,
            format!("status must be one of {TASK_STATUSES:?}"),
        );
    }
    let task_id = str_param(params, "task_id");
    let Some(task) = state.entity_of(EntityKind::ClinicalTask, task_id) else {
        return fail(ErrorCode::NotFound, format!("no clinical task with id {task_id:?}"));
    };
    let old = task.attr("status").cloned();
    if old.as_ref().map(|v| v.canonical()) == Some(status.to_string()) {
        return fail(
            ErrorCode::Conflict,
            format!("task {task_id} already has status {status:?}"),
        );
    }
    HandlerOutcome::Mutate {
        data: json!({ "updated": task_id, "field": "status", "value": status }),
        delta: MutationDelta {
            created: vec![],
            updated: vec![FieldUpdate {
                id: task_id.to_string(),
                field: "status".to_string(),
                old,
                new: Some(AttrValue::Str(status.into())),
            }],
            bed_moves: vec![],
        },
    }
}

const ENCOUNTER_FIELDS: [&str; 5] = ["status", "disposition", "chief_complaint", "note", "bed_id"];
const ENCOUNTER_STATUSES: [&str; 3] = ["active", "discharged", "transferred"];

fn update_encounter(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let field = str_param(params, "field");
    let value = str_param(params, "value");
    if !ENCOUNTER_FIELDS.contains(&field) {
        return fail(
            ErrorCode::InvalidParams,
            format!("field must be one of {ENCOUNTER_FIELDS:?}"),
        );
    }
    if field == "status" && !ENCOUNTER_STATUSES.contains(&value) {
        return fail(
            ErrorCode::InvalidParams,
            format!("status must be one of {ENCOUNTER_STATUSES:?}"),
        );
    }
    let enc_id = str_param(params, "encounter_id");
    let Some(encounter) = state.entity_of(EntityKind::Encounter, enc_id) else {
        return fail(ErrorCode::NotFound, format!("no encounter with id {enc_id:?}"));
    };

    if field == "bed_id" {
        return assign_bed(state, encounter, value);
    }

    let old = encounter.attr(field).cloned();
    if old.as_ref().map(|v| v.canonical()) == Some(value.to_string()) {
        return fail(
            ErrorCode::Conflict,
            format!("encounter {enc_id} field {field:?} already has that value"),
        );
    }
    HandlerOutcome::Mutate {
        data: json!({ "updated": enc_id, "field": field, "value": value }),
        delta: MutationDelta {
            created: vec![],
            updated: vec![FieldUpdate {
                id: enc_id.to_string(),
                field: field.to_string(),
                old,
                new: Some(AttrValue::Str(value.into())),
            }],
            bed_moves: vec![],
        },
    }
}

fn assign_bed(state: &WorldState, encounter: &Entity, value: &str) -> HandlerOutcome {
    let enc_id = encounter.id.clone();
    let held = encounter.reference("bed_id").map(str::to_string);

    if value == "none" {
        let Some(bed_id) = held else {
            return fail(ErrorCode::Conflict, format!("encounter {enc_id} holds no bed"));
        };
        return HandlerOutcome::Mutate {
            data: json!({ "updated": enc_id, "field": "bed_id", "value": "none" }),
            delta: MutationDelta {
                created: vec![],
                updated: vec![FieldUpdate {
                    id: enc_id.clone(),
                    field: "bed_id".to_string(),
                    old: Some(AttrValue::Ref(bed_id.clone())),
                    new: None,
                }],
                bed_moves: vec![BedMove {
                    bed_id,
                    from: BedStatus::Occupied { encounter_id: enc_id },
                    to: BedStatus::Free,
                }],
            },
        };
    }

    let Some(status) = state.bed_status(value) else {
        return fail(ErrorCode::NotFound, format!("no bed with id {value:?}"));
    };
    if matches!(status, BedStatus::Occupied { .. }) {
        return fail(ErrorCode::Conflict, format!("bed {value} is already occupied"));
    }
    if held.as_deref() == Some(value) {
        return fail(ErrorCode::Conflict, format!("encounter {enc_id} already holds {value}"));
    }

    let mut updated = Vec::new();
    let mut bed_moves = Vec::new();
    if let Some(prev) = held {
        updated.push(FieldUpdate {
            id: enc_id.clone(),
            field: "bed_id".to_string(),
            old: Some(AttrValue::Ref(prev.clone())),
            new: None,
        });
        bed_moves.push(BedMove {
            bed_id: prev,
            from: BedStatus::Occupied {
                encounter_id: enc_id.clone(),
            },
            to: BedStatus::Free,
        });
    }
    updated.push(FieldUpdate {
        id: enc_id.clone(),
        field: "bed_id".to_string(),
        old: None,
        new: Some(AttrValue::Ref(value.to_string())),
    });
    bed_moves.push(BedMove {
        bed_id: value.to_string(),
        from: BedStatus::Free,
        to: BedStatus::Occupied {
            encounter_id: enc_id.clone(),
        },
    });
    HandlerOutcome::Mutate {
        data: json!({ "updated": enc_id, "field": "bed_id", "value": value }),
        delta: MutationDelta {
            created: vec![],
            updated,
            bed_moves,
        },
    }
}

const PATIENT_FIELDS: [&str; 3] = ["name", "allergies", "insurance_id"];

fn update_patient_record(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let field = str_param(params, "field");
    let value = str_param(params, "value");
    if !PATIENT_FIELDS.contains(&field) {
        return fail(
            ErrorCode::InvalidParams,
            format!("field must be one of {PATIENT_FIELDS:?}"),
        );
    }
    let patient_id = str_param(params, "patient_id");
    let Some(patient) = state.entity_of(EntityKind::Patient, patient_id) else {
        return fail(ErrorCode::NotFound, format!("no patient with id {patient_id:?}"));
    };

    if field == "insurance_id" {
        if state.entity_of(EntityKind::Insurance, value).is_none() {
            return fail(ErrorCode::NotFound, format!("no insurance with id {value:?}"));
        }
        let old = patient.reference("insurance_id").map(|s| AttrValue::Ref(s.to_string()));
        if old.as_ref().map(|v| v.canonical()) == Some(value.to_string()) {
            return fail(ErrorCode::Conflict, "insurance reference unchanged");
        }
        return HandlerOutcome::Mutate {
            data: json!({ "updated": patient_id, "field": field, "value": value }),
            delta: MutationDelta {
                created: vec![],
                updated: vec![FieldUpdate {
                    id: patient_id.to_string(),
                    field: field.to_string(),
                    old,
                    new: Some(AttrValue::Ref(value.to_string())),
                }],
                bed_moves: vec![],
            },
        };
    }

    let old = patient.attr(field).cloned();
    if old.as_ref().map(|v| v.canonical()) == Some(value.to_string()) {
        return fail(
            ErrorCode::Conflict,
            format!("patient {patient_id} field {field:?} already has that value"),
        );
    }
    HandlerOutcome::Mutate {
        data: json!({ "updated": patient_id, "field": field, "value": value }),
        delta: MutationDelta {
            created: vec![],
            updated: vec![FieldUpdate {
                id: patient_id.to_string(),
                field: field.to_string(),
                old,
                new: Some(AttrValue::Str(value.into())),
            }],
            bed_moves: vec![],
        },
    }
}

fn register_patient(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let patient_id = state.next_id(EntityKind::Patient);
    let entity = Entity::new(patient_id.clone(), EntityKind::Patient)
        .with_attr("name", AttrValue::Str(str_param(params, "name").into()))
        .with_attr("birth_date", AttrValue::Str(str_param(params, "birth_date").into()))
        .with_attr("registered_at", AttrValue::Ts(state.clock()));
    HandlerOutcome::Mutate {
        data: json!({ "patient_id": patient_id }),
        delta: MutationDelta {
            created: vec![entity],
            updated: vec![],
            bed_moves: vec![],
        },
    }
}

fn apply_protocol(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let enc_id = str_param(params, "encounter_id");
    if state.entity_of(EntityKind::Encounter, enc_id).is_none() {
        return fail(ErrorCode::NotFound, format!("no encounter with id {enc_id:?}"));
    }
    let protocol_id = str_param(params, "protocol_id");
    let Some(protocol) = state.entity_of(EntityKind::Protocol, protocol_id) else {
        return fail(ErrorCode::NotFound, format!("no protocol with id {protocol_id:?}"));
    };
    let condition_id = protocol
        .reference("condition_id")
        .expect("generated protocols always reference a condition")
        .to_string();
    let plan_id = state.next_id(EntityKind::TreatmentPlan);
    let entity = Entity::new(plan_id.clone(), EntityKind::TreatmentPlan)
        .with_attr("status", AttrValue::Str("initiated".into()))
        .with_attr("protocol_id", AttrValue::Code(protocol_id.into()))
        .with_ref("encounter_id", enc_id)
        .with_ref("condition_id", condition_id);
    HandlerOutcome::Mutate {
        data: json!({ "plan_id": plan_id }),
        delta: MutationDelta {
            created: vec![entity],
            updated: vec![],
            bed_moves: vec![],
        },
    }
}

fn process_discharge(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let enc_id = str_param(params, "encounter_id");
    let Some(encounter) = state.entity_of(EntityKind::Encounter, enc_id) else {
        return fail(ErrorCode::NotFound, format!("no encounter with id {enc_id:?}"));
    };
    if encounter.attr("status").map(|s| s.canonical()) != Some("active".into()) {
        return fail(ErrorCode::Conflict, format!("encounter {enc_id} is not active"));
    }
    let instructions = str_param(params, "instructions");
    let mut updated = vec![
        FieldUpdate {
            id: enc_id.to_string(),
            field: "status".to_string(),
            old: encounter.attr("status").cloned(),
            new: Some(AttrValue::Str("discharged".into())),
        },
        FieldUpdate {
            id: enc_id.to_string(),
            field: "disposition".to_string(),
            old: encounter.attr("disposition").cloned(),
            new: Some(AttrValue::Str("discharged home".into())),
        },
        FieldUpdate {
            id: enc_id.to_string(),
            field: "discharge_instructions".to_string(),
            old: encounter.attr("discharge_instructions").cloned(),
            new: Some(AttrValue::Str(instructions.into())),
        },
    ];
    let mut bed_moves = Vec::new();
    if let Some(bed_id) = encounter.reference("bed_id") {
        updated.push(FieldUpdate {
            id: enc_id.to_string(),
            field: "bed_id".to_string(),
            old: Some(AttrValue::Ref(bed_id.to_string())),
            new: None,
        });
        bed_moves.push(BedMove {
            bed_id: bed_id.to_string(),
            from: BedStatus::Occupied {
                encounter_id: enc_id.to_string(),
            },
            to: BedStatus::Free,
        });
    }
    HandlerOutcome::Mutate {
        data: json!({ "encounter_id": enc_id, "disposition": "discharged home" }),
        delta: MutationDelta {
            created: vec![],
            updated,
            bed_moves,
        },
    }
}

fn process_transfer(state: &WorldState, params: &BTreeMap<String, Value>) -> HandlerOutcome {
    let enc_id = str_param(params, "encounter_id");
    let facility = str_param(params, "facility_id");
    let Some(encounter) = state.entity_of(EntityKind::Encounter, enc_id) else {
        return fail(ErrorCode::NotFound, format!("no encounter with id {enc_id:?}"));
    };
    if encounter.attr("status").map(|s| s.canonical()) != Some("active".into()) {
        return fail(
            ErrorCode::Conflict,
            format!("encounter {enc_id} is not transfer-eligible"),
        );
    }
    let in_flight = state
        .entities_of(EntityKind::TransferRecord)
        .filter(|r| r.attr("facility").map(|f| f.canonical()) == Some(facility.to_string()))
        .filter(|r| {
            matches!(
                r.attr("status").map(|s| s.canonical()).as_deref(),
                Some("accepted") | Some("pending")
            )
        })
        .count();
    if in_flight >= FACILITY_CAPACITY {
        return fail(
            ErrorCode::Conflict,
            format!("facility {facility} has no receiving capacity"),
        );
    }

    let transfer_id = state.next_id(EntityKind::TransferRecord);
    let record = Entity::new(transfer_id.clone(), EntityKind::TransferRecord)
        .with_attr("facility", AttrValue::Code(facility.into()))
        .with_attr("status", AttrValue::Str("accepted".into()))
        .with_attr("initiated_at", AttrValue::Ts(state.clock()))
        .with_ref("encounter_id", enc_id);

    let mut updated = vec![FieldUpdate {
        id: enc_id.to_string(),
        field: "status".to_string(),
        old: encounter.attr("status").cloned(),
        new: Some(AttrValue::Str("transferred".into())),
    }];
    let mut bed_moves = Vec::new();
    if let Some(bed_id) = encounter.reference("bed_id") {
        updated.push(FieldUpdate {
            id: enc_id.to_string(),
            field: "bed_id".to_string(),
            old: Some(AttrValue::Ref(bed_id.to_string())),
            new: None,
        });
        bed_moves.push(BedMove {
            bed_id: bed_id.to_string(),
            from: BedStatus::Occupied {
                encounter_id: enc_id.to_string(),
            },
            to: BedStatus::Free,
        });
    }

    let handshake_params = [
        ("encounter_id".to_string(), json!(enc_id)),
        ("facility_id".to_string(), json!(facility)),
        ("ack".to_string(), json!("receiving-facility-accepts")),
    ]
    .into_iter()
    .collect();

    HandlerOutcome::Transfer {
        data: json!({
            "encounter_id": enc_id,
            "facility_id": facility,
            "transfer_id": transfer_id,
            "status": "accepted",
        }),
        handshake_params,
        delta: MutationDelta {
            created: vec![record],
            updated,
            bed_moves,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolserver::{params_from, ToolCatalog, ToolServer};
    use crate::world::{GenerationProfile, WorldState};

    fn server() -> ToolServer {
        let world = WorldState::generate(42, &GenerationProfile::desk()).unwrap();
        ToolServer::new(world, ToolCatalog::embedded())
    }

    fn active_encounter(srv: &ToolServer) -> String {
        srv.state()
            .entities_of(EntityKind::Encounter)
            .find(|e| e.attr("status").map(|s| s.canonical()) == Some("active".into()))
            .unwrap()
            .id
            .clone()
    }

    #[test]
    fn search_caps_at_ten_without_continuation() {
        let mut srv = server();
        // Single-letter query matches most of the 36 patients.
        let matching = srv
            .state()
            .entities_of(EntityKind::Patient)
            .filter(|e| e.attr("name").unwrap().canonical().to_lowercase().contains('a'))
            .count();
        assert!(matching > PAGINATION_CAP);
        let result = srv.dispatch("searchPatients", &params_from(&[("name", json!("a"))]));
        let super::super::ToolResult::Ok { data } = result else {
            panic!("search failed")
        };
        let obj = data.as_object().unwrap();
        assert_eq!(obj.keys().collect::<Vec<_>>(), vec!["results"]);
        assert_eq!(obj["results"].as_array().unwrap().len(), PAGINATION_CAP);
    }

    #[test]
    fn results_are_sorted_by_id_before_truncation() {
        let mut srv = server();
        let result = srv.dispatch("searchPatients", &params_from(&[("name", json!("a"))]));
        let super::super::ToolResult::Ok { data } = result else {
            panic!()
        };
        let ids: Vec<String> = data["results"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["id"].as_str().unwrap().to_string())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn stale_labs_are_suppressed_from_reads() {
        let mut srv = server();
        let (enc_id, _) = srv
            .state()
            .noise_plan()
            .stale_data
            .iter()
            .next()
            .map(|(k, v)| (k.clone(), *v))
            .unwrap();
        let result = srv.dispatch(
            "getEncounterDetails",
            &params_from(&[("encounter_id", json!(enc_id))]),
        );
        let super::super::ToolResult::Ok { data } = result else {
            panic!()
        };
        let attrs = data["attributes"].as_object().unwrap();
        assert!(
            !attrs.keys().any(|k| k.starts_with("lab_")),
            "stale labs must be hidden until visible_at"
        );
        // The underlying state still holds them.
        assert!(srv
            .state()
            .entity(&enc_id)
            .unwrap()
            .attributes
            .keys()
            .any(|k| k.starts_with("lab_")));
    }

    #[test]
    fn decision_rule_truth_table() {
        let mut srv = server();
        let rule = srv
            .state()
            .entities_of(EntityKind::DecisionRule)
            .next()
            .unwrap();
        let rule_id = rule.id.clone();
        let factors: Vec<String> = rule
            .attr("factors")
            .unwrap()
            .canonical()
            .split(',')
            .map(str::to_string)
            .collect();

        // Enumerate the full truth table: positive iff any factor true.
        for mask in 0..(1u32 << factors.len()) {
            let inputs: serde_json::Map<String, Value> = factors
                .iter()
                .enumerate()
                .map(|(i, f)| (f.clone(), json!(mask & (1 << i) != 0)))
                .collect();
            let result = srv.dispatch(
                "runDecisionRule",
                &params_from(&[("rule_id", json!(rule_id)), ("inputs", Value::Object(inputs))]),
            );
            let super::super::ToolResult::Ok { data } = result else {
                panic!()
            };
            let expected = if mask == 0 { "negative" } else { "positive" };
            assert_eq!(data["result"], json!(expected), "mask {mask:b}");
            assert_eq!(data["score"], json!(mask.count_ones()));
        }
    }

    #[test]
    fn decision_rule_rejects_bad_inputs() {
        let mut srv = server();
        let rule_id = srv
            .state()
            .entities_of(EntityKind::DecisionRule)
            .next()
            .unwrap()
            .id
            .clone();
        let missing = srv.dispatch(
            "runDecisionRule",
            &params_from(&[("rule_id", json!(rule_id)), ("inputs", json!({}))]),
        );
        assert_eq!(missing.error_code(), Some(ErrorCode::InvalidParams));

        let unknown_rule = srv.dispatch(
            "runDecisionRule",
            &params_from(&[("rule_id", json!("rul-9999")), ("inputs", json!({}))]),
        );
        assert_eq!(unknown_rule.error_code(), Some(ErrorCode::NotFound));
    }

    #[test]
    fn transfer_emits_handshake_before_completion() {
        let mut srv = server();
        let enc = active_encounter(&srv);
        let before = srv.state().audit().len();
        let result = srv.dispatch(
            "processTransfer",
            &params_from(&[("encounter_id", json!(enc)), ("facility_id", json!("fac-0001"))]),
        );
        assert!(result.is_ok(), "{result:?}");
        let audit = srv.state().audit();
        assert_eq!(audit.len(), before + 2);
        let handshake = &audit[before];
        let completion = &audit[before + 1];
        assert_eq!(handshake.tool, super::super::HANDSHAKE_EVENT);
        assert_eq!(completion.tool, super::super::TRANSFER_COMPLETE_EVENT);
        assert!(handshake.seq < completion.seq);
        assert!(completion.mutation_delta.is_some());
    }

    #[test]
    fn transfer_on_missing_encounter_changes_nothing() {
        let mut srv = server();
        let digest = srv.state().core_digest();
        let before = srv.state().audit().len();
        let result = srv.dispatch(
            "processTransfer",
            &params_from(&[
                ("encounter_id", json!("enc-9999")),
                ("facility_id", json!("fac-0001")),
            ]),
        );
        assert_eq!(result.error_code(), Some(ErrorCode::NotFound));
        assert_eq!(srv.state().core_digest(), digest);
        assert_eq!(srv.state().audit().len(), before + 1);
    }

    #[test]
    fn transfer_capacity_conflict() {
        let mut srv = server();
        let encounters: Vec<String> = srv
            .state()
            .entities_of(EntityKind::Encounter)
            .filter(|e| e.attr("status").map(|s| s.canonical()) == Some("active".into()))
            .map(|e| e.id.clone())
            .take(FACILITY_CAPACITY + 1)
            .collect();
        assert!(encounters.len() > FACILITY_CAPACITY);
        for enc in &encounters[..FACILITY_CAPACITY] {
            let result = srv.dispatch(
                "processTransfer",
                &params_from(&[("encounter_id", json!(enc)), ("facility_id", json!("fac-0007"))]),
            );
            assert!(result.is_ok(), "{result:?}");
        }
        let overflow = srv.dispatch(
            "processTransfer",
            &params_from(&[
                ("encounter_id", json!(encounters[FACILITY_CAPACITY])),
                ("facility_id", json!("fac-0007")),
            ]),
        );
        assert_eq!(overflow.error_code(), Some(ErrorCode::Conflict));
    }

    #[test]
    fn discharge_frees_the_bed() {
        let mut srv = server();
        let enc = srv
            .state()
            .entities_of(EntityKind::Encounter)
            .find(|e| {
                e.attr("status").map(|s| s.canonical()) == Some("active".into())
                    && e.reference("bed_id").is_some()
            })
            .unwrap()
            .id
            .clone();
        let occupied_before = srv.state().occupied_bed_count();
        let result = srv.dispatch(
            "processDischarge",
            &params_from(&[
                ("encounter_id", json!(enc)),
                ("instructions", json!("rest, fluids, return precautions reviewed")),
            ]),
        );
        assert!(result.is_ok(), "{result:?}");
        assert_eq!(srv.state().occupied_bed_count(), occupied_before - 1);
        assert!(srv.state().check_invariants().is_empty());

        // Second discharge conflicts.
        let again = srv.dispatch(
            "processDischarge",
            &params_from(&[("encounter_id", json!(enc)), ("instructions", json!("n/a"))]),
        );
        assert_eq!(again.error_code(), Some(ErrorCode::Conflict));
    }

    #[test]
    fn bed_assignment_conflicts_on_occupied_bed() {
        let mut srv = server();
        let (bed_id, _) = srv
            .state()
            .bed_ledger()
            .iter()
            .find(|(_, s)| matches!(s, BedStatus::Occupied { .. }))
            .map(|(b, s)| (b.clone(), s.clone()))
            .unwrap();
        let enc = srv
            .state()
            .entities_of(EntityKind::Encounter)
            .find(|e| {
                e.attr("status").map(|s| s.canonical()) == Some("active".into())
                    && e.reference("bed_id").is_none()
            })
            .unwrap()
            .id
            .clone();
        let digest = srv.state().core_digest();
        let result = srv.dispatch(
            "updateEncounter",
            &params_from(&[
                ("encounter_id", json!(enc)),
                ("field", json!("bed_id")),
                ("value", json!(bed_id)),
            ]),
        );
        assert_eq!(result.error_code(), Some(ErrorCode::Conflict));
        assert_eq!(srv.state().core_digest(), digest);
        assert!(srv.state().check_invariants().is_empty());
    }

    #[test]
    fn register_patient_grows_table_and_audit() {
        let mut srv = server();
        let patients = srv.state().entity_count(EntityKind::Patient);
        let audit = srv.state().audit().len();
        let result = srv.dispatch(
            "registerPatient",
            &params_from(&[("name", json!("Rowan Petrov")), ("birth_date", json!("1975-03-02"))]),
        );
        assert!(result.is_ok());
        assert_eq!(srv.state().entity_count(EntityKind::Patient), patients + 1);
        assert_eq!(srv.state().audit().len(), audit + 1);
        let entry = srv.state().audit().last().unwrap();
        let delta = entry.mutation_delta.as_ref().unwrap();
        assert_eq!(delta.created.len(), 1);
    }
}
