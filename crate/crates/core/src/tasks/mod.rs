//! Task file format, loading with preflight validation, and the synthetic
//! desk-scale corpus generator.

mod corpus;
mod preflight;

pub use corpus::{generate_synthetic_corpus, CorpusManifest, ManifestTask, Sizing};
pub use preflight::{preflight, CheckResult, PreflightReport, PreflightRow};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rubric::{Criterion, Dimension, Method, PredicateError, PredicateExpr};
use crate::toolserver::FaultPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ClinicalReasoning,
    MultiStepWorkflows,
    ClinicalCommunication,
    SafetyCriticalJudgment,
    InformationRetrieval,
    TemporalReasoning,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::ClinicalReasoning,
        Category::MultiStepWorkflows,
        Category::ClinicalCommunication,
        Category::SafetyCriticalJudgment,
        Category::InformationRetrieval,
        Category::TemporalReasoning,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::ClinicalReasoning => "clinical_reasoning",
            Category::MultiStepWorkflows => "multi_step_workflows",
            Category::ClinicalCommunication => "clinical_communication",
            Category::SafetyCriticalJudgment => "safety_critical_judgment",
            Category::InformationRetrieval => "information_retrieval",
            Category::TemporalReasoning => "temporal_reasoning",
        }
    }

    /// Default turn budget per category.
    pub fn default_max_turns(&self) -> u32 {
        match self {
            Category::InformationRetrieval => 10,
            Category::ClinicalReasoning => 20,
            Category::ClinicalCommunication => 20,
            Category::TemporalReasoning => 30,
            Category::SafetyCriticalJudgment => 30,
            Category::MultiStepWorkflows => 50,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_TASK_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_TASK_SEED
}

fn default_profile() -> String {
    "desk".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSetting {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_profile")]
    pub profile: String,
    pub timestamp: i64,
    #[serde(default)]
    pub active_encounter_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub category: Category,
    pub difficulty: u8,
    pub description: String,
    pub world_setting: WorldSetting,
    pub max_turns: u32,
    pub criteria: Vec<Criterion>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Task {
    /// Fault plan fixture carried in task metadata, if any.
    pub fn fault_plan(&self) -> Result<Option<FaultPlan>, TaskError> {
        match self.metadata.get("fault_plan") {
            None => Ok(None),
            Some(value) => {
                let rules = serde_json::from_value(value.clone()).map_err(|e| {
                    TaskError::Schema {
                        path: PathBuf::new(),
                        message: format!("task {}: fault_plan malformed: {e}", self.id),
                    }
                })?;
                Ok(Some(FaultPlan { rules }))
            }
        }
    }

    pub fn safety_critical_count(&self) -> usize {
        self.criteria.iter().filter(|c| c.safety_critical).count()
    }

    /// Schema-level validation beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), TaskError> {
        let schema_err = |message: String| TaskError::Schema {
            path: PathBuf::new(),
            message,
        };
        if self.criteria.is_empty() {
            return Err(schema_err(format!("task {}: at least one criterion required", self.id)));
        }
        if !(1..=5).contains(&self.difficulty) {
            return Err(schema_err(format!(
                "task {}: difficulty {} outside 1..5",
                self.id, self.difficulty
            )));
        }
        if self.max_turns == 0 {
            return Err(schema_err(format!("task {}: max_turns must be positive", self.id)));
        }
        let mut ids: Vec<&str> = self.criteria.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(schema_err(format!("task {}: criterion ids must be unique", self.id)));
        }
        for criterion in &self.criteria {
            criterion
                .validate()
                .map_err(|e| schema_err(format!("task {}: {e}", self.id)))?;
        }
        self.fault_plan()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("schema error{}: {message}", fmt_path(.path))]
    Schema { path: PathBuf, message: String },
    #[error("predicate error in criterion {criterion}: {source}")]
    Predicate {
        criterion: String,
        source: PredicateError,
    },
    #[error("corpus sizing too small: {0} tasks cannot cover all six categories")]
    SizingTooSmall(usize),
}

fn fmt_path(path: &Path) -> String {
    if path.as_os_str().is_empty() {
        String::new()
    } else {
        format!(" in {}", path.display())
    }
}

/// Serialized criterion shape: the predicate travels as source text.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCriterion {
    id: String,
    assertion: String,
    method: Method,
    safety_critical: bool,
    dimension: Dimension,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intent_rescue_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTask {
    id: String,
    category: Category,
    difficulty: u8,
    description: String,
    world_setting: WorldSetting,
    max_turns: u32,
    criteria: Vec<RawCriterion>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, serde_json::Value>,
}

impl RawCriterion {
    fn into_criterion(self) -> Result<Criterion, TaskError> {
        let predicate = match self.predicate {
            Some(text) => Some(PredicateExpr::parse(&text).map_err(|source| {
                TaskError::Predicate {
                    criterion: self.id.clone(),
                    source,
                }
            })?),
            None => None,
        };
        Ok(Criterion {
            id: self.id,
            assertion: self.assertion,
            method: self.method,
            safety_critical: self.safety_critical,
            dimension: self.dimension,
            predicate,
            regex: self.regex,
            intent_rescue_reason: self.intent_rescue_reason,
        })
    }

    fn from_criterion(criterion: &Criterion) -> RawCriterion {
        RawCriterion {
            id: criterion.id.clone(),
            assertion: criterion.assertion.clone(),
            method: criterion.method,
            safety_critical: criterion.safety_critical,
            dimension: criterion.dimension,
            predicate: criterion.predicate.as_ref().map(|p| p.render()),
            regex: criterion.regex.clone(),
            intent_rescue_reason: criterion.intent_rescue_reason.clone(),
        }
    }
}

/// Render a task to its canonical YAML document.
pub fn task_to_yaml(task: &Task) -> String {
    let raw = RawTask {
        id: task.id.clone(),
        category: task.category,
        difficulty: task.difficulty,
        description: task.description.clone(),
        world_setting: task.world_setting.clone(),
        max_turns: task.max_turns,
        criteria: task.criteria.iter().map(RawCriterion::from_criterion).collect(),
        metadata: task.metadata.clone(),
    };
    serde_yaml::to_string(&raw).expect("task serialization cannot fail")
}

pub fn task_from_yaml(path: &Path, text: &str) -> Result<Task, TaskError> {
    // Two-stage parse so syntax errors and schema errors stay distinct.
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| TaskError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let raw: RawTask = serde_yaml::from_value(value).map_err(|e| TaskError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut criteria = Vec::with_capacity(raw.criteria.len());
    for criterion in raw.criteria {
        criteria.push(criterion.into_criterion()?);
    }
    let task = Task {
        id: raw.id,
        category: raw.category,
        difficulty: raw.difficulty,
        description: raw.description,
        world_setting: raw.world_setting,
        max_turns: raw.max_turns,
        criteria,
        metadata: raw.metadata,
    };
    task.validate().map_err(|e| match e {
        TaskError::Schema { message, .. } => TaskError::Schema {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    Ok(task)
}

/// Load one task file.
pub fn load_task(path: &Path) -> Result<Task, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|e| TaskError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    task_from_yaml(path, &text)
}

/// All task files under a corpus directory, sorted by path.
pub fn task_files(dir: &Path) -> Result<Vec<PathBuf>, TaskError> {
    let mut files = Vec::new();
    collect_yaml(dir, &mut files).map_err(|e| TaskError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    files.sort();
    Ok(files)
}

fn collect_yaml(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_yaml(&path, out)?;
        } else if path.extension().and_then(|e| e.to_str()) == Some("yaml") {
            out.push(path);
        }
    }
    Ok(())
}

/// Load every task in a corpus directory.
pub fn load_corpus(dir: &Path) -> Result<Vec<Task>, TaskError> {
    let mut tasks = Vec::new();
    for path in task_files(dir)? {
        tasks.push(load_task(&path)?);
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD_TASK: &str = r#"
id: TEST-001
category: information_retrieval
difficulty: 1
description: look things up
world_setting:
  seed: 42
  profile: desk
  timestamp: 2592000
  active_encounter_ids: [enc-0001]
max_turns: 10
criteria:
  - id: test-001-c01
    assertion: agent fetched the encounter
    method: world_state
    safety_critical: false
    dimension: clinical_completeness
    predicate: CONTAINS getEncounterDetails WITH encounter_id=enc-0001
"#;

    #[test]
    fn well_formed_task_loads_with_parsed_predicates() {
        let task = task_from_yaml(Path::new("test.yaml"), GOOD_TASK).unwrap();
        assert_eq!(task.id, "TEST-001");
        assert!(task.criteria[0].predicate.is_some());
        assert_eq!(task.world_setting.seed, 42);
    }

    #[test]
    fn unknown_category_is_schema_error() {
        let text = GOOD_TASK.replace("information_retrieval", "quantum_triage");
        let err = task_from_yaml(Path::new("test.yaml"), &text).unwrap_err();
        assert!(matches!(err, TaskError::Schema { .. }), "{err}");
    }

    #[test]
    fn bare_contains_is_predicate_error_with_position() {
        let text = GOOD_TASK.replace(
            "CONTAINS getEncounterDetails WITH encounter_id=enc-0001",
            "CONTAINS",
        );
        let err = task_from_yaml(Path::new("test.yaml"), &text).unwrap_err();
        let TaskError::Predicate { criterion, source } = err else {
            panic!("expected predicate error");
        };
        assert_eq!(criterion, "test-001-c01");
        assert_eq!(source.position, 8);
    }

    #[test]
    fn yaml_syntax_error_is_parse_error() {
        let err = task_from_yaml(Path::new("test.yaml"), "id: [unclosed").unwrap_err();
        assert!(matches!(err, TaskError::Parse { .. }));
    }

    #[test]
    fn duplicate_criterion_ids_rejected() {
        let text = GOOD_TASK.replace("test-001-c01", "dup").replace(
            "predicate: CONTAINS getEncounterDetails WITH encounter_id=enc-0001",
            "predicate: CONTAINS searchPatients\n  - id: dup\n    assertion: again\n    method: pattern\n    safety_critical: false\n    dimension: safety\n    regex: x",
        );
        let err = task_from_yaml(Path::new("test.yaml"), &text).unwrap_err();
        assert!(err.to_string().contains("unique"), "{err}");
    }

    #[test]
    fn yaml_round_trip_preserves_task() {
        let task = task_from_yaml(Path::new("test.yaml"), GOOD_TASK).unwrap();
        let rendered = task_to_yaml(&task);
        let reparsed = task_from_yaml(Path::new("test.yaml"), &rendered).unwrap();
        assert_eq!(task, reparsed);
    }
}
