//! Stub clinical-knowledge catalog: conditions, symmetric confusion pairs and
//! disjunctive decision rules. Content is synthetic; only the structure is
//! load-bearing.

use serde::{Deserialize, Serialize};

use super::WorldError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub name: String,
    /// Symmetric: if A lists B then B lists A.
    pub confusable_with: Vec<String>,
    pub decision_rules: Vec<String>,
}

/// A stub decision rule: positive iff any input factor is true.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub id: String,
    pub name: String,
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCatalog {
    pub entries: Vec<CatalogEntry>,
    pub rules: Vec<RuleSpec>,
}

impl ConditionCatalog {
    /// The built-in stub catalog: eight confusion pairs, one decision rule
    /// per pair.
    pub fn stub() -> ConditionCatalog {
        let pairs: [(&str, &str); 8] = [
            ("crushing-chest-pain-a", "crushing-chest-pain-b"),
            ("acute-dyspnea-a", "acute-dyspnea-b"),
            ("altered-mental-status-a", "altered-mental-status-b"),
            ("severe-headache-a", "severe-headache-b"),
            ("abdominal-pain-a", "abdominal-pain-b"),
            ("syncope-benign", "syncope-cardiac"),
            ("metabolic-acidosis-a", "metabolic-acidosis-b"),
            ("focal-weakness-a", "focal-weakness-b"),
        ];
        let rule_names: [&str; 8] = [
            "perc-like",
            "wells-like",
            "heart-like",
            "curb-like",
            "nexus-like",
            "pecarn-like",
            "centor-like",
            "abcd-like",
        ];
        let factor_pool: [&str; 6] = [
            "age_over_50",
            "abnormal_vitals",
            "prior_event",
            "unilateral_signs",
            "recent_procedure",
            "high_risk_history",
        ];

        let mut entries = Vec::new();
        let mut rules = Vec::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            let id_a = format!("con-{:04}", 2 * i + 1);
            let id_b = format!("con-{:04}", 2 * i + 2);
            let rule_id = format!("rul-{:04}", i + 1);
            let factors = (0..3 + (i % 3))
                .map(|j| factor_pool[(i + j) % factor_pool.len()].to_string())
                .collect();
            rules.push(RuleSpec {
                id: rule_id.clone(),
                name: rule_names[i].to_string(),
                factors,
            });
            entries.push(CatalogEntry {
                id: id_a.clone(),
                name: a.to_string(),
                confusable_with: vec![id_b.clone()],
                decision_rules: vec![rule_id.clone()],
            });
            entries.push(CatalogEntry {
                id: id_b,
                name: b.to_string(),
                confusable_with: vec![id_a],
                decision_rules: vec![rule_id],
            });
        }
        ConditionCatalog { entries, rules }
    }

    pub fn rule(&self, id: &str) -> Option<&RuleSpec> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn entry(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Check confusable-with symmetry and rule resolvability.
    pub fn validate(&self) -> Result<(), WorldError> {
        for entry in &self.entries {
            for other_id in &entry.confusable_with {
                let other = self.entry(other_id).ok_or_else(|| {
                    WorldError::InvalidProfile(format!(
                        "catalog entry {} lists unknown confusable {}",
                        entry.id, other_id
                    ))
                })?;
                if !other.confusable_with.contains(&entry.id) {
                    return Err(WorldError::InvalidProfile(format!(
                        "confusable-with not symmetric between {} and {}",
                        entry.id, other_id
                    )));
                }
            }
            for rule_id in &entry.decision_rules {
                if self.rule(rule_id).is_none() {
                    return Err(WorldError::InvalidProfile(format!(
                        "catalog entry {} lists unknown rule {}",
                        entry.id, rule_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_catalog_is_symmetric() {
        let catalog = ConditionCatalog::stub();
        catalog.validate().unwrap();
        assert_eq!(catalog.entries.len(), 16);
        assert_eq!(catalog.rules.len(), 8);
    }

    #[test]
    fn asymmetric_catalog_rejected() {
        let mut catalog = ConditionCatalog::stub();
        catalog.entries[0].confusable_with = vec!["con-0004".to_string()];
        assert!(catalog.validate().is_err());
    }
}
