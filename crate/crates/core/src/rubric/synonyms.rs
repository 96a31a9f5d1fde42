//! Versioned synonym table for class-valued parameter matching. A predicate
//! filter naming a medication class (e.g. `medication=anticoagulant`) matches
//! audit entries whose value is the class itself or any listed member. The
//! table is data, not code: gaps in it surface as `vocab_gap` disagreements
//! in the overlay audit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const DEFAULT_SYNONYMS: &str = include_str!("../../../../configs/synonyms.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymTable {
    pub version: u32,
    /// field name -> class -> member terms.
    pub fields: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl SynonymTable {
    pub fn embedded() -> SynonymTable {
        serde_json::from_str(DEFAULT_SYNONYMS).expect("embedded synonym table must parse")
    }

    pub fn empty() -> SynonymTable {
        SynonymTable {
            version: 0,
            fields: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<SynonymTable, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Is `field` a class-valued field this table knows about?
    pub fn covers_field(&self, field: &str) -> bool {
        self.fields.contains_key(&canonicalize(field))
    }

    /// Does `actual` satisfy a filter asking for `wanted` on `field`?
    /// Exact canonical equality always matches; for covered fields a class
    /// term also matches its listed members.
    pub fn matches(&self, field: &str, wanted: &str, actual: &str) -> bool {
        let wanted = canonicalize(wanted);
        let actual = canonicalize(actual);
        if wanted == actual {
            return true;
        }
        self.fields
            .get(&canonicalize(field))
            .and_then(|classes| classes.get(&wanted))
            .map_or(false, |members| {
                members.iter().any(|m| canonicalize(m) == actual)
            })
    }
}

/// Canonical form used for all predicate value comparison.
pub fn canonicalize(value: &str) -> String {
    value.trim().to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_matches_members_one_way() {
        let table = SynonymTable::embedded();
        assert!(table.matches("medication", "anticoagulant", "heparin"));
        assert!(table.matches("medication", "anticoagulant", "Heparin "));
        assert!(table.matches("medication", "heparin", "heparin"));
        // Members do not match the class in the other direction.
        assert!(!table.matches("medication", "heparin", "anticoagulant"));
        // Unknown member: the vocab gap the overlay audit is built to catch.
        assert!(!table.matches("medication", "anticoagulant", "dalteparin"));
    }

    #[test]
    fn uncovered_fields_are_exact_only() {
        let table = SynonymTable::embedded();
        assert!(table.matches("task_type", "blood_admin", "blood_admin"));
        assert!(!table.matches("task_type", "blood_admin", "transfusion"));
        assert!(!table.covers_field("task_type"));
        assert!(table.covers_field("medication"));
    }
}
