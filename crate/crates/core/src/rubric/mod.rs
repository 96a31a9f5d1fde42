//! Binary-criteria rubric: criterion representation, the predicate language,
//! pattern checks, judge delegation, and the safety-gated reward.
//!
//! Reward over a trajectory is the mean of per-criterion satisfaction
//! indicators, hard-gated to zero whenever any safety-critical criterion is
//! unsatisfied. A trajectory passes only when every criterion is satisfied.
//! Dimension weights are diagnostic labels for error decomposition and never
//! enter the reward.

mod eval;
mod grade;
mod judge;
mod predicate;
mod synonyms;

pub use eval::{AtomEvidence, AttemptCredit, Evaluator};
pub use grade::{breakdown_from_verdicts, eval_pattern, grade, GradeError};
pub use judge::{
    quoted_phrases, JudgeAdapter, JudgeError, RemoteChatJudge, ScriptedPhraseJudge, StaticJudge,
};
pub use predicate::{Atom, Cmp, ParamFilter, PredicateError, PredicateExpr, ToolFilter};
pub use synonyms::{canonicalize, SynonymTable, DEFAULT_SYNONYMS};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WorldState,
    LlmJudge,
    Pattern,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::WorldState => "world_state",
            Method::LlmJudge => "llm_judge",
            Method::Pattern => "pattern",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The six diagnostic dimensions with their fixed weights. Weights are used
/// only in post-hoc error decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    ClinicalCompleteness,
    ClinicalCorrectness,
    ProtocolAdherence,
    DocumentationQuality,
    Safety,
    TemporalSequencing,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::ClinicalCompleteness,
        Dimension::ClinicalCorrectness,
        Dimension::ProtocolAdherence,
        Dimension::DocumentationQuality,
        Dimension::Safety,
        Dimension::TemporalSequencing,
    ];

    pub fn weight(&self) -> f64 {
        match self {
            Dimension::ClinicalCompleteness => 0.20,
            Dimension::ClinicalCorrectness => 0.25,
            Dimension::ProtocolAdherence => 0.15,
            Dimension::DocumentationQuality => 0.10,
            Dimension::Safety => 0.20,
            Dimension::TemporalSequencing => 0.10,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::ClinicalCompleteness => "clinical_completeness",
            Dimension::ClinicalCorrectness => "clinical_correctness",
            Dimension::ProtocolAdherence => "protocol_adherence",
            Dimension::DocumentationQuality => "documentation_quality",
            Dimension::Safety => "safety",
            Dimension::TemporalSequencing => "temporal_sequencing",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("criterion {id}: {message}")]
    Inconsistent { id: String, message: String },
}

/// One binary proposition with a declared verification method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    pub assertion: String,
    pub method: Method,
    pub safety_critical: bool,
    pub dimension: Dimension,
    /// Present iff `method == WorldState`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<PredicateExpr>,
    /// Present iff `method == Pattern`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    /// Mandatory attestation when the predicate uses attempt semantics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_rescue_reason: Option<String>,
}

impl Criterion {
    /// Method/payload consistency: world_state iff predicate present,
    /// pattern iff regex present.
    pub fn validate(&self) -> Result<(), RubricError> {
        let fail = |message: &str| {
            Err(RubricError::Inconsistent {
                id: self.id.clone(),
                message: message.to_string(),
            })
        };
        match self.method {
            Method::WorldState => {
                if self.predicate.is_none() {
                    return fail("world_state criterion must carry a predicate");
                }
                if self.regex.is_some() {
                    return fail("world_state criterion cannot carry a regex");
                }
            }
            Method::Pattern => {
                if self.regex.is_none() {
                    return fail("pattern criterion must carry a regex");
                }
                if self.predicate.is_some() {
                    return fail("pattern criterion cannot carry a predicate");
                }
            }
            Method::LlmJudge => {
                if self.predicate.is_some() || self.regex.is_some() {
                    return fail("llm_judge criterion carries neither predicate nor regex");
                }
            }
        }
        if let Some(regex) = &self.regex {
            if let Err(e) = regex::Regex::new(regex) {
                return fail(&format!("regex does not compile: {e}"));
            }
        }
        Ok(())
    }
}

/// Grading outcome for one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion_id: String,
    pub satisfied: bool,
    pub method: Method,
    pub evidence: Vec<AtomEvidence>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionTally {
    pub satisfied: u32,
    pub total: u32,
}

/// The safety-gated reward with its diagnostic decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub reward: f64,
    pub gate_tripped: bool,
    pub satisfied_count: u32,
    pub total_count: u32,
    pub per_dimension: BTreeMap<Dimension, DimensionTally>,
    pub passed: bool,
}

impl RewardBreakdown {
    pub fn safety_failed(&self) -> bool {
        self.gate_tripped
    }
}
