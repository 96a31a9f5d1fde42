//! Append-only audit records and the mutation deltas they carry.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::entity::{AttrValue, Entity};

/// Closed set of protocol error codes.
///
/// The first five arise from real validation on the agent side of the
/// boundary; the last five are simulator-side faults and may only be produced
/// by the simulator itself (including deliberate fault injection).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownTool,
    MissingParam,
    InvalidParams,
    NotFound,
    Conflict,
    UnknownTaskType,
    NotImplemented,
    SimulatorError,
    InternalError,
    ServiceUnavailable,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 10] = [
        ErrorCode::UnknownTool,
        ErrorCode::MissingParam,
        ErrorCode::InvalidParams,
        ErrorCode::NotFound,
        ErrorCode::Conflict,
        ErrorCode::UnknownTaskType,
        ErrorCode::NotImplemented,
        ErrorCode::SimulatorError,
        ErrorCode::InternalError,
        ErrorCode::ServiceUnavailable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::UnknownTool => "unknown_tool",
            ErrorCode::MissingParam => "missing_param",
            ErrorCode::InvalidParams => "invalid_params",
            ErrorCode::NotFound => "not_found",
            ErrorCode::Conflict => "conflict",
            ErrorCode::UnknownTaskType => "unknown_task_type",
            ErrorCode::NotImplemented => "not_implemented",
            ErrorCode::SimulatorError => "simulator_error",
            ErrorCode::InternalError => "internal_error",
            ErrorCode::ServiceUnavailable => "service_unavailable",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorCode> {
        ErrorCode::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Simulator-side faults. These are the only codes a fault plan may
    /// inject, and the only error codes that count as evidence of attempt.
    pub fn is_simulator_side(&self) -> bool {
        matches!(
            self,
            ErrorCode::UnknownTaskType
                | ErrorCode::NotImplemented
                | ErrorCode::SimulatorError
                | ErrorCode::InternalError
                | ErrorCode::ServiceUnavailable
        )
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSummary {
    Ok,
    Error,
}

/// One field change inside a mutation delta. `old == None` means the field
/// did not exist before; `new == None` means it was removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldUpdate {
    pub id: String,
    pub field: String,
    pub old: Option<AttrValue>,
    pub new: Option<AttrValue>,
}

/// Occupancy status of one bed in the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BedStatus {
    Free,
    Occupied { encounter_id: String },
}

impl BedStatus {
    pub fn label(&self) -> &'static str {
        match self {
            BedStatus::Free => "free",
            BedStatus::Occupied { .. } => "occupied",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BedMove {
    pub bed_id: String,
    pub from: BedStatus,
    pub to: BedStatus,
}

/// The committed effect of one successful mutating tool call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationDelta {
    pub created: Vec<Entity>,
    pub updated: Vec<FieldUpdate>,
    pub bed_moves: Vec<BedMove>,
}

impl MutationDelta {
    pub fn is_empty(&self) -> bool {
        self.created.is_empty() && self.updated.is_empty() && self.bed_moves.is_empty()
    }
}

/// One append-only record per tool call (plus workflow sub-events).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub clock: i64,
    pub tool: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub result_summary: ResultSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_delta: Option<MutationDelta>,
}

impl AuditEntry {
    pub fn is_ok(&self) -> bool {
        self.result_summary == ResultSummary::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulator_side_split() {
        let sim: Vec<_> = ErrorCode::ALL
            .iter()
            .filter(|c| c.is_simulator_side())
            .collect();
        assert_eq!(sim.len(), 5);
        assert!(!ErrorCode::MissingParam.is_simulator_side());
        assert!(!ErrorCode::InvalidParams.is_simulator_side());
        assert!(!ErrorCode::UnknownTool.is_simulator_side());
    }

    #[test]
    fn error_code_round_trip() {
        for code in ErrorCode::ALL {
            assert_eq!(ErrorCode::parse(code.as_str()), Some(code));
        }
        assert_eq!(ErrorCode::parse("timeout"), None);
    }
}
