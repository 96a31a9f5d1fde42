//! The six structured noise classes. A [`NoisePlan`] is fully determined by
//! the world seed; the generator bakes most classes into the entity tables
//! and records here exactly what was injected so tests can assert on it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Search tools cap result lists at this many rows and emit no continuation
/// marker.
pub const PAGINATION_CAP: usize = 10;

/// Number of distinct noise classes.
pub const NOISE_CLASS_COUNT: usize = 6;

/// Lab results become visible this long after the current clock.
pub const STALE_LAB_DELAY_SECS: i64 = 2 * 3600;

/// Magnitude of note-timestamp skew.
pub const CLOCK_SKEW_SECS: i64 = 15 * 60;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisePlan {
    /// (i) pagination: always on, fixed cap.
    pub pagination_cap: usize,
    /// (ii) clock skew: entity id -> signed offset (seconds) applied to its
    /// note timestamp.
    pub clock_skew: BTreeMap<String, i64>,
    /// (iii) incomplete records: entity id -> fields withheld at generation.
    pub incomplete_records: BTreeMap<String, BTreeSet<String>>,
    /// (iv) stale data: entity id -> visibility delay (seconds) applied to
    /// its lab attributes.
    pub stale_data: BTreeMap<String, i64>,
    /// (v) ambiguous documentation: entity id -> substitutions applied to its
    /// note text (expansion -> abbreviation).
    pub ambiguous_docs: BTreeMap<String, BTreeMap<String, String>>,
    /// (vi) red herrings: encounter id -> injected incidental finding. The
    /// flag that a finding is irrelevant lives only here, never in tool
    /// output.
    pub red_herrings: BTreeMap<String, String>,
}

impl NoisePlan {
    pub fn new() -> NoisePlan {
        NoisePlan {
            pagination_cap: PAGINATION_CAP,
            ..NoisePlan::default()
        }
    }
}

/// Abbreviation table for ambiguous-documentation noise.
pub const ABBREVIATIONS: &[(&str, &str)] = &[
    ("shortness of breath", "sob"),
    ("chest pain", "cp"),
    ("status post", "s/p"),
    ("history of", "h/o"),
    ("within normal limits", "wnl"),
    ("rule out", "r/o"),
];

/// Incidental-finding pool for red-herring noise.
pub const RED_HERRING_FINDINGS: &[&str] = &[
    "mild transaminase elevation on prior panel",
    "trace ankle edema noted in old chart",
    "borderline qt interval on archived tracing",
    "incidental thyroid nodule on previous imaging",
];
