//! Tool catalog: the 24 tool specs loaded from a schema document. The server
//! refuses to start unless the document carries exactly 24 specs in the
//! 12/4/6/2 wave split with the canonical names.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ServerError;

/// Embedded copy of the canonical schema document.
pub const DEFAULT_TOOL_SCHEMA: &str = include_str!("../../../../configs/tools.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Read,
    Compute,
    Mutate,
    Workflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Number,
    Boolean,
    Object,
}

impl ParamType {
    pub fn matches(&self, value: &serde_json::Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Number => value.is_number(),
            ParamType::Boolean => value.is_boolean(),
            ParamType::Object => value.is_object(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Object => "object",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub param_type: ParamType,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    /// camelCase name at the protocol boundary.
    pub name: String,
    pub wave: u8,
    pub kind: ToolKind,
    pub params: BTreeMap<String, ParamSpec>,
    pub returns: String,
}

impl ToolSpec {
    pub fn is_mutating(&self) -> bool {
        matches!(self.kind, ToolKind::Mutate | ToolKind::Workflow)
    }

    /// snake_case handler key for the camelCase boundary name.
    pub fn handler_key(&self) -> String {
        camel_to_snake(&self.name)
    }
}

pub fn camel_to_snake(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    for ch in name.chars() {
        if ch.is_ascii_uppercase() {
            out.push('_');
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

/// Canonical boundary names per wave.
pub const CANONICAL_TOOLS: [(&str, u8); 24] = [
    ("searchEncounters", 1),
    ("searchPatients", 1),
    ("searchClinicalKnowledge", 1),
    ("searchReferenceMaterials", 1),
    ("searchAvailableResources", 1),
    ("getEncounterDetails", 1),
    ("getConditionDetails", 1),
    ("getPatientHistory", 1),
    ("getProtocolDetails", 1),
    ("getTransferStatus", 1),
    ("getInsuranceCoverage", 1),
    ("getReferenceArticle", 1),
    ("checkResourceAvailability", 2),
    ("calculateTransferTime", 2),
    ("runDecisionRule", 2),
    ("validateTreatmentPlan", 2),
    ("createClinicalOrder", 3),
    ("updateTaskStatus", 3),
    ("updateEncounter", 3),
    ("updatePatientRecord", 3),
    ("registerPatient", 3),
    ("applyProtocol", 3),
    ("processDischarge", 4),
    ("processTransfer", 4),
];

#[derive(Debug, Clone, Deserialize)]
struct SchemaDocument {
    version: u32,
    tools: Vec<ToolSpec>,
}

#[derive(Debug, Clone)]
pub struct ToolCatalog {
    specs: BTreeMap<String, ToolSpec>,
}

impl ToolCatalog {
    pub fn from_json(text: &str) -> Result<ToolCatalog, ServerError> {
        let doc: SchemaDocument =
            serde_json::from_str(text).map_err(|e| ServerError::Schema(e.to_string()))?;
        if doc.version != 1 {
            return Err(ServerError::Schema(format!(
                "unsupported tool schema version {}",
                doc.version
            )));
        }
        Self::validate(&doc.tools)?;
        Ok(ToolCatalog {
            specs: doc.tools.into_iter().map(|t| (t.name.clone(), t)).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<ToolCatalog, ServerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Schema(format!("cannot read {}: {e}", path.display())))?;
        ToolCatalog::from_json(&text)
    }

    /// The embedded canonical catalog.
    pub fn embedded() -> ToolCatalog {
        ToolCatalog::from_json(DEFAULT_TOOL_SCHEMA)
            .expect("embedded tool schema must be valid")
    }

    fn validate(tools: &[ToolSpec]) -> Result<(), ServerError> {
        if tools.len() != 24 {
            return Err(ServerError::Schema(format!(
                "tool schema must define exactly 24 tools, found {}",
                tools.len()
            )));
        }
        let mut wave_counts = [0usize; 5];
        for tool in tools {
            if !(1..=4).contains(&tool.wave) {
                return Err(ServerError::Schema(format!(
                    "tool {} has wave {} outside 1..4",
                    tool.name, tool.wave
                )));
            }
            wave_counts[tool.wave as usize] += 1;
            let expected_kind = match tool.wave {
                1 => ToolKind::Read,
                2 => ToolKind::Compute,
                3 => ToolKind::Mutate,
                _ => ToolKind::Workflow,
            };
            if tool.kind != expected_kind {
                return Err(ServerError::Schema(format!(
                    "tool {} kind does not match its wave",
                    tool.name
                )));
            }
            if !CANONICAL_TOOLS
                .iter()
                .any(|(name, wave)| *name == tool.name && *wave == tool.wave)
            {
                return Err(ServerError::Schema(format!(
                    "tool {} (wave {}) is not in the canonical tool set",
                    tool.name, tool.wave
                )));
            }
        }
        if wave_counts[1..] != [12, 4, 6, 2] {
            return Err(ServerError::Schema(format!(
                "wave split must be 12/4/6/2, found {:?}",
                &wave_counts[1..]
            )));
        }
        let mut names: Vec<&str> = tools.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != 24 {
            return Err(ServerError::Schema("duplicate tool names".to_string()));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.get(name)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.specs.values()
    }

    pub fn search_tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.specs
            .values()
            .filter(|t| t.name.starts_with("search"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_catalog_validates() {
        let catalog = ToolCatalog::embedded();
        assert_eq!(catalog.specs().count(), 24);
        assert_eq!(catalog.search_tools().count(), 5);
    }

    #[test]
    fn wrong_wave_split_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_TOOL_SCHEMA).unwrap();
        doc["tools"][0]["wave"] = serde_json::json!(2);
        doc["tools"][0]["kind"] = serde_json::json!("compute");
        let err = ToolCatalog::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("canonical") || err.to_string().contains("12/4/6/2"));
    }

    #[test]
    fn missing_tool_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(DEFAULT_TOOL_SCHEMA).unwrap();
        doc["tools"].as_array_mut().unwrap().pop();
        let err = ToolCatalog::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("24"));
    }

    #[test]
    fn name_mapping_is_snake_case() {
        assert_eq!(camel_to_snake("searchPatients"), "search_patients");
        assert_eq!(camel_to_snake("processTransfer"), "process_transfer");
        assert_eq!(camel_to_snake("runDecisionRule"), "run_decision_rule");
    }

    #[test]
    fn wave_one_tools_never_mutate() {
        let catalog = ToolCatalog::embedded();
        for spec in catalog.specs().filter(|s| s.wave == 1) {
            assert!(!spec.is_mutating());
        }
    }
}
