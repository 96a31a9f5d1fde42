//! The 24-tool protocol server: input validation, fault injection,
//! pagination, mutation commit and per-call audit.
//!
//! One server instance binds one [`WorldState`]; requests are processed
//! strictly serially. Validation runs in a fixed order so error codes are
//! deterministic: unknown_tool, then missing_param, then invalid_params,
//! then (inside handlers) not_found, then conflict. Injected simulator
//! faults fire after agent-side validation and before the handler, so a
//! schema-invalid call can never be laundered into a simulator fault.

mod fault;
mod handlers;
mod spec;
mod wire;

pub use fault::{FaultPlan, FaultRule};
pub use spec::{
    camel_to_snake, ParamSpec, ParamType, ToolCatalog, ToolKind, ToolSpec, CANONICAL_TOOLS,
    DEFAULT_TOOL_SCHEMA,
};
pub use wire::{serve_lines, WireRequest};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{AuditContext, ErrorCode, WorldError, WorldState};

/// Simulated seconds added to the world clock per dispatched call.
pub const CLOCK_TICK_SECS: i64 = 30;

/// Audit tool name of the receiving-facility handshake record.
pub const HANDSHAKE_EVENT: &str = "handshake";

/// Audit tool name of the transfer completion record.
pub const TRANSFER_COMPLETE_EVENT: &str = "transferComplete";

/// Per-facility cap on simultaneously accepted or pending transfers.
pub const FACILITY_CAPACITY: usize = 3;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("tool schema invalid: {0}")]
    Schema(String),
    #[error("invalid fault plan: {0}")]
    InvalidFaultPlan(String),
}

/// Result envelope of one tool call. Exactly one of `data` or
/// `(code, message)` is populated.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolResult {
    Ok { data: serde_json::Value },
    Err { code: ErrorCode, message: String },
}

impl ToolResult {
    pub fn ok(data: serde_json::Value) -> ToolResult {
        ToolResult::Ok { data }
    }

    pub fn err(code: ErrorCode, message: impl Into<String>) -> ToolResult {
        ToolResult::Err {
            code,
            message: message.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, ToolResult::Ok { .. })
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match self {
            ToolResult::Ok { .. } => None,
            ToolResult::Err { code, .. } => Some(*code),
        }
    }

    /// Wire envelope with the bit-exact field names.
    pub fn envelope(&self) -> serde_json::Value {
        match self {
            ToolResult::Ok { data } => serde_json::json!({
                "status": "ok",
                "data": data,
            }),
            ToolResult::Err { code, message } => serde_json::json!({
                "status": "error",
                "code": code.as_str(),
                "message": message,
            }),
        }
    }

    pub fn from_envelope(value: &serde_json::Value) -> Option<ToolResult> {
        match value.get("status")?.as_str()? {
            "ok" => Some(ToolResult::Ok {
                data: value.get("data")?.clone(),
            }),
            "error" => Some(ToolResult::Err {
                code: ErrorCode::parse(value.get("code")?.as_str()?)?,
                message: value.get("message")?.as_str()?.to_string(),
            }),
            _ => None,
        }
    }
}

/// Outcome of a tool handler, before commit.
pub(crate) enum HandlerOutcome {
    /// Read or compute: no state change.
    Data(serde_json::Value),
    /// Mutation to commit with the dispatch audit entry.
    Mutate {
        data: serde_json::Value,
        delta: crate::world::MutationDelta,
    },
    /// Transfer workflow: handshake record then completion record.
    Transfer {
        data: serde_json::Value,
        handshake_params: BTreeMap<String, serde_json::Value>,
        delta: crate::world::MutationDelta,
    },
    Fail { code: ErrorCode, message: String },
}

#[derive(Debug)]
pub struct ToolServer {
    state: WorldState,
    catalog: ToolCatalog,
    faults: FaultPlan,
}

impl ToolServer {
    pub fn new(state: WorldState, catalog: ToolCatalog) -> ToolServer {
        ToolServer {
            state,
            catalog,
            faults: FaultPlan::empty(),
        }
    }

    /// Configure fault injection for subsequent dispatches. Rejects plans
    /// carrying agent-side error codes.
    pub fn inject_fault(&mut self, plan: FaultPlan) -> Result<(), ServerError> {
        plan.validate()?;
        self.faults = plan;
        Ok(())
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn into_state(self) -> WorldState {
        self.state
    }

    pub fn catalog(&self) -> &ToolCatalog {
        &self.catalog
    }

    /// Dispatch one tool call. Appends exactly one audit entry for the call
    /// itself regardless of outcome; a successful transfer workflow appends
    /// its handshake record first and its completion record in place of the
    /// plain entry.
    pub fn dispatch(
        &mut self,
        tool: &str,
        params: &BTreeMap<String, serde_json::Value>,
    ) -> ToolResult {
        self.state.advance_clock(CLOCK_TICK_SECS);
        let ctx = AuditContext::new(tool, params.clone());

        let Some(spec) = self.catalog.get(tool) else {
            self.state.record_error(ctx, ErrorCode::UnknownTool);
            return ToolResult::err(ErrorCode::UnknownTool, format!("no tool named {tool:?}"));
        };
        let spec = spec.clone();

        if let Some(result) = self.validate_params(&spec, params) {
            self.state.record_error(ctx, result.error_code().unwrap());
            return result;
        }

        if let Some(rule) = self.faults.matching(tool, params) {
            let code = rule.code;
            let message = rule
                .message
                .clone()
                .unwrap_or_else(|| format!("simulator fault injected for {tool}"));
            self.state.record_error(ctx, code);
            return ToolResult::err(code, message);
        }

        match handlers::run(&spec, &self.state, params) {
            HandlerOutcome::Data(data) => {
                self.state.record_ok(ctx);
                ToolResult::ok(data)
            }
            HandlerOutcome::Mutate { data, delta } => {
                match self.state.apply_mutation(ctx.clone(), delta) {
                    Ok(_) => ToolResult::ok(data),
                    Err(WorldError::ConservationViolation(msg)) => {
                        self.state.record_error(ctx, ErrorCode::Conflict);
                        ToolResult::err(ErrorCode::Conflict, msg)
                    }
                    Err(other) => {
                        self.state.record_error(ctx, ErrorCode::InternalError);
                        ToolResult::err(ErrorCode::InternalError, other.to_string())
                    }
                }
            }
            HandlerOutcome::Transfer {
                data,
                handshake_params,
                delta,
            } => {
                let completion_ctx = AuditContext::new(TRANSFER_COMPLETE_EVENT, params.clone());
                self.state
                    .record_ok(AuditContext::new(HANDSHAKE_EVENT, handshake_params));
                match self.state.apply_mutation(completion_ctx, delta) {
                    Ok(_) => ToolResult::ok(data),
                    Err(err) => {
                        // Handshake already audited; a completion failure here
                        // is a simulator defect, surfaced as such.
                        self.state.record_error(ctx, ErrorCode::InternalError);
                        ToolResult::err(ErrorCode::InternalError, err.to_string())
                    }
                }
            }
            HandlerOutcome::Fail { code, message } => {
                self.state.record_error(ctx, code);
                ToolResult::err(code, message)
            }
        }
    }

    /// Schema validation: missing required params first, then type and
    /// unknown-key checks.
    fn validate_params(
        &self,
        spec: &ToolSpec,
        params: &BTreeMap<String, serde_json::Value>,
    ) -> Option<ToolResult> {
        for (name, param) in &spec.params {
            if param.required && !params.contains_key(name) {
                return Some(ToolResult::err(
                    ErrorCode::MissingParam,
                    format!("required parameter {name:?} is missing"),
                ));
            }
        }
        for (name, value) in params {
            let Some(param) = spec.params.get(name) else {
                return Some(ToolResult::err(
                    ErrorCode::InvalidParams,
                    format!("unknown parameter {name:?} for {}", spec.name),
                ));
            };
            if !param.param_type.matches(value) {
                return Some(ToolResult::err(
                    ErrorCode::InvalidParams,
                    format!(
                        "parameter {name:?} must be of type {}",
                        param.param_type.as_str()
                    ),
                ));
            }
        }
        None
    }
}

/// Convenience for building param maps in tests and agents.
pub fn params_from(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

/// One recorded tool call, as embedded in trajectory messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub tool: String,
    pub params: BTreeMap<String, serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{GenerationProfile, ResultSummary};
    use serde_json::json;

    fn server() -> ToolServer {
        let world = WorldState::generate(42, &GenerationProfile::desk()).unwrap();
        ToolServer::new(world, ToolCatalog::embedded())
    }

    #[test]
    fn unknown_tool_is_audited() {
        let mut srv = server();
        let result = srv.dispatch("frobnicate", &BTreeMap::new());
        assert_eq!(result.error_code(), Some(ErrorCode::UnknownTool));
        let last = srv.state().audit().last().unwrap();
        assert_eq!(last.tool, "frobnicate");
        assert_eq!(last.result_summary, ResultSummary::Error);
    }

    #[test]
    fn validation_order_missing_before_invalid() {
        let mut srv = server();
        // Both a missing required param and an unknown param: missing wins.
        let result = srv.dispatch("searchPatients", &params_from(&[("bogus", json!("x"))]));
        assert_eq!(result.error_code(), Some(ErrorCode::MissingParam));
    }

    #[test]
    fn type_mismatch_is_invalid_params() {
        let mut srv = server();
        let result = srv.dispatch("searchPatients", &params_from(&[("name", json!(7))]));
        assert_eq!(result.error_code(), Some(ErrorCode::InvalidParams));
    }

    #[test]
    fn every_dispatch_appends_exactly_one_entry() {
        let mut srv = server();
        let cases: Vec<(&str, BTreeMap<String, serde_json::Value>)> = vec![
            ("searchPatients", params_from(&[("name", json!("a"))])),
            ("searchPatients", BTreeMap::new()),
            ("nonsense", BTreeMap::new()),
            (
                "getEncounterDetails",
                params_from(&[("encounter_id", json!("enc-9999"))]),
            ),
        ];
        for (tool, params) in cases {
            let before = srv.state().audit().len();
            srv.dispatch(tool, &params);
            assert_eq!(srv.state().audit().len(), before + 1, "tool {tool}");
        }
    }

    #[test]
    fn reads_never_change_core_digest() {
        let mut srv = server();
        let before = srv.state().core_digest();
        srv.dispatch("searchPatients", &params_from(&[("name", json!("chen"))]));
        srv.dispatch(
            "getEncounterDetails",
            &params_from(&[("encounter_id", json!("enc-0001"))]),
        );
        srv.dispatch(
            "checkResourceAvailability",
            &params_from(&[("resource_kind", json!("bed"))]),
        );
        assert_eq!(srv.state().core_digest(), before);
    }

    #[test]
    fn fault_injection_fires_only_on_well_formed_calls() {
        let mut srv = server();
        srv.inject_fault(FaultPlan {
            rules: vec![FaultRule {
                tool: "createClinicalOrder".into(),
                params_match: params_from(&[("task_type", json!("blood_admin"))]),
                code: ErrorCode::UnknownTaskType,
                message: None,
            }],
        })
        .unwrap();

        // Malformed call: missing details; agent-side error wins.
        let malformed = srv.dispatch(
            "createClinicalOrder",
            &params_from(&[
                ("encounter_id", json!("enc-0001")),
                ("task_type", json!("blood_admin")),
            ]),
        );
        assert_eq!(malformed.error_code(), Some(ErrorCode::MissingParam));

        // Well-formed call: fault fires.
        let faulted = srv.dispatch(
            "createClinicalOrder",
            &params_from(&[
                ("encounter_id", json!("enc-0001")),
                ("task_type", json!("blood_admin")),
                ("details", json!("two units crossmatched")),
            ]),
        );
        assert_eq!(faulted.error_code(), Some(ErrorCode::UnknownTaskType));
        let last = srv.state().audit().last().unwrap();
        assert_eq!(last.error_code, Some(ErrorCode::UnknownTaskType));
    }

    #[test]
    fn injecting_agent_side_code_is_rejected() {
        let mut srv = server();
        let err = srv.inject_fault(FaultPlan {
            rules: vec![FaultRule {
                tool: "createClinicalOrder".into(),
                params_match: BTreeMap::new(),
                code: ErrorCode::MissingParam,
                message: None,
            }],
        });
        assert!(err.is_err());
    }

    #[test]
    fn empty_fault_plan_changes_nothing() {
        let mut srv = server();
        srv.inject_fault(FaultPlan::empty()).unwrap();
        let result = srv.dispatch(
            "createClinicalOrder",
            &params_from(&[
                ("encounter_id", json!("enc-0001")),
                ("task_type", json!("lab_draw")),
                ("details", json!("cbc and bmp")),
            ]),
        );
        assert!(result.is_ok(), "{result:?}");
    }

    #[test]
    fn mutation_changes_core_digest_iff_ok() {
        let mut srv = server();
        let before = srv.state().core_digest();
        let ok = srv.dispatch(
            "registerPatient",
            &params_from(&[
                ("name", json!("Quinn Osei")),
                ("birth_date", json!("1990-04-12")),
            ]),
        );
        assert!(ok.is_ok());
        let after_ok = srv.state().core_digest();
        assert_ne!(before, after_ok);

        let err = srv.dispatch(
            "updateEncounter",
            &params_from(&[
                ("encounter_id", json!("enc-9999")),
                ("field", json!("status")),
                ("value", json!("discharged")),
            ]),
        );
        assert_eq!(err.error_code(), Some(ErrorCode::NotFound));
        assert_eq!(srv.state().core_digest(), after_ok);
    }

    #[test]
    fn envelope_shapes_are_exact() {
        let ok = ToolResult::ok(json!({"results": []})).envelope();
        let keys: Vec<&str> = ok.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        assert_eq!(keys, vec!["data", "status"]);

        let err = ToolResult::err(ErrorCode::NotFound, "nope").envelope();
        let keys: Vec<&str> = err.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        assert_eq!(keys, vec!["code", "message", "status"]);
    }
}
