//! Deterministic fault injection. A fault plan maps (tool, parameter filter)
//! to a simulator-side error code; matching dispatches fail with that code
//! after agent-side validation has passed, exactly as a broken simulator
//! would behave.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::world::ErrorCode;

use super::ServerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    pub tool: String,
    /// Exact-match filter over parameter values; empty matches every call of
    /// the tool.
    #[serde(default)]
    pub params_match: BTreeMap<String, serde_json::Value>,
    pub code: ErrorCode,
    #[serde(default)]
    pub message: Option<String>,
}

impl FaultRule {
    pub fn matches(&self, tool: &str, params: &BTreeMap<String, serde_json::Value>) -> bool {
        tool == self.tool
            && self
                .params_match
                .iter()
                .all(|(k, v)| params.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub rules: Vec<FaultRule>,
}

impl FaultPlan {
    pub fn empty() -> FaultPlan {
        FaultPlan::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Agent-side codes must arise from real validation, never injection.
    pub fn validate(&self) -> Result<(), ServerError> {
        for rule in &self.rules {
            if !rule.code.is_simulator_side() {
                return Err(ServerError::InvalidFaultPlan(format!(
                    "code {} is agent-side and cannot be injected",
                    rule.code
                )));
            }
        }
        Ok(())
    }

    pub fn matching(
        &self,
        tool: &str,
        params: &BTreeMap<String, serde_json::Value>,
    ) -> Option<&FaultRule> {
        self.rules.iter().find(|r| r.matches(tool, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, serde_json::Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), json!(v)))
            .collect()
    }

    #[test]
    fn agent_side_codes_rejected() {
        let plan = FaultPlan {
            rules: vec![FaultRule {
                tool: "createClinicalOrder".into(),
                params_match: BTreeMap::new(),
                code: ErrorCode::MissingParam,
                message: None,
            }],
        };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn filter_matches_on_subset() {
        let rule = FaultRule {
            tool: "createClinicalOrder".into(),
            params_match: params(&[("task_type", "blood_admin")]),
            code: ErrorCode::UnknownTaskType,
            message: None,
        };
        assert!(rule.matches(
            "createClinicalOrder",
            &params(&[("task_type", "blood_admin"), ("encounter_id", "enc-0001")])
        ));
        assert!(!rule.matches(
            "createClinicalOrder",
            &params(&[("task_type", "imaging_ct")])
        ));
        assert!(!rule.matches("updateEncounter", &params(&[("task_type", "blood_admin")])));
    }
}
