//! Generation profiles: per-kind target counts plus the knowledge catalog to
//! project onto the graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::catalog::ConditionCatalog;
use super::entity::EntityKind;
use super::WorldError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationProfile {
    pub name: String,
    pub counts: BTreeMap<EntityKind, usize>,
    pub catalog: ConditionCatalog,
}

impl GenerationProfile {
    /// Small profile (~200 entities) for fast tests and desk-scale corpora.
    pub fn desk() -> GenerationProfile {
        GenerationProfile::from_counts(
            "desk",
            [
                (EntityKind::Patient, 36),
                (EntityKind::Encounter, 30),
                (EntityKind::Bed, 16),
                (EntityKind::Staff, 12),
                (EntityKind::ClinicalTask, 20),
                (EntityKind::TreatmentPlan, 10),
                (EntityKind::Protocol, 8),
                (EntityKind::DecisionRule, 8),
                (EntityKind::Condition, 16),
                (EntityKind::Medication, 10),
                (EntityKind::Supply, 8),
                (EntityKind::Insurance, 20),
                (EntityKind::ReferenceMaterial, 8),
                (EntityKind::TransferRecord, 4),
            ],
        )
    }

    /// Full-scale profile totalling 3,987 entities.
    pub fn paper_scale() -> GenerationProfile {
        GenerationProfile::from_counts(
            "paper",
            [
                (EntityKind::Patient, 800),
                (EntityKind::Encounter, 700),
                (EntityKind::Bed, 120),
                (EntityKind::Staff, 250),
                (EntityKind::ClinicalTask, 500),
                (EntityKind::TreatmentPlan, 300),
                (EntityKind::Protocol, 60),
                (EntityKind::DecisionRule, 45),
                (EntityKind::Condition, 370),
                (EntityKind::Medication, 220),
                (EntityKind::Supply, 180),
                (EntityKind::Insurance, 350),
                (EntityKind::ReferenceMaterial, 60),
                (EntityKind::TransferRecord, 32),
            ],
        )
    }

    fn from_counts(name: &str, counts: [(EntityKind, usize); 14]) -> GenerationProfile {
        GenerationProfile {
            name: name.to_string(),
            counts: counts.into_iter().collect(),
            catalog: ConditionCatalog::stub(),
        }
    }

    /// Look up a named built-in profile.
    pub fn by_name(name: &str) -> Option<GenerationProfile> {
        match name {
            "desk" => Some(GenerationProfile::desk()),
            "paper" => Some(GenerationProfile::paper_scale()),
            _ => None,
        }
    }

    pub fn count(&self, kind: EntityKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// A profile with no patients or encounters would make every task
    /// vacuous; reject it up front.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.count(EntityKind::Patient) == 0 || self.count(EntityKind::Encounter) == 0 {
            return Err(WorldError::InvalidProfile(format!(
                "profile {:?} must generate at least one patient and one encounter",
                self.name
            )));
        }
        self.catalog.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_profile_totals_3987() {
        assert_eq!(GenerationProfile::paper_scale().total(), 3987);
    }

    #[test]
    fn desk_profile_is_small() {
        let total = GenerationProfile::desk().total();
        assert!((150..=260).contains(&total), "desk total {total}");
    }

    #[test]
    fn zero_patient_profile_rejected() {
        let mut profile = GenerationProfile::desk();
        profile.counts.insert(EntityKind::Patient, 0);
        assert!(profile.validate().is_err());
    }
}
