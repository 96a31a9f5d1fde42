//! Seeded entity-graph world state.
//!
//! A [`WorldState`] is the single source of truth for deterministic
//! verification: entity tables for the 14 kinds, a bed-occupancy ledger, a
//! simulated clock, the noise plan, and the append-only audit log. Instances
//! are single-writer; one trial owns one instance.

mod audit;
mod catalog;
mod digest;
mod dump;
mod entity;
mod generate;
mod invariants;
mod noise;
mod profile;
mod rng;

pub use audit::{
    AuditEntry, BedMove, BedStatus, ErrorCode, FieldUpdate, MutationDelta, ResultSummary,
};
pub use catalog::{CatalogEntry, ConditionCatalog, RuleSpec};
pub use dump::WorldDump;
pub use entity::{
    edge_schema_for, AttrValue, Attribute, EdgeSchema, Entity, EntityKind, EDGE_SCHEMA,
};
pub use invariants::Violation;
pub use noise::{
    NoisePlan, ABBREVIATIONS, CLOCK_SKEW_SECS, NOISE_CLASS_COUNT, PAGINATION_CAP,
    RED_HERRING_FINDINGS, STALE_LAB_DELAY_SECS,
};
pub use profile::GenerationProfile;
pub use rng::{stable_hash, StreamRng};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("conservation violation: {0}")]
    ConservationViolation(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("world dump malformed: {0}")]
    MalformedDump(String),
}

/// Identifying context recorded with every audit entry.
#[derive(Debug, Clone)]
pub struct AuditContext {
    pub tool: String,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl AuditContext {
    pub fn new(tool: &str, params: BTreeMap<String, serde_json::Value>) -> AuditContext {
        AuditContext {
            tool: tool.to_string(),
            params,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldState {
    seed: u64,
    profile_name: String,
    clock: i64,
    entities: BTreeMap<EntityKind, BTreeMap<String, Entity>>,
    bed_ledger: BTreeMap<String, BedStatus>,
    audit: Vec<AuditEntry>,
    noise_plan: NoisePlan,
}

impl WorldState {
    /// Generate a fresh world. Identical `(seed, profile)` inputs yield
    /// byte-identical states and digests.
    pub fn generate(seed: u64, profile: &GenerationProfile) -> Result<WorldState, WorldError> {
        profile.validate()?;
        Ok(generate::generate_world(seed, profile))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn profile_name(&self) -> &str {
        &self.profile_name
    }

    pub fn clock(&self) -> i64 {
        self.clock
    }

    pub fn set_clock(&mut self, clock: i64) {
        self.clock = clock;
    }

    pub fn advance_clock(&mut self, secs: i64) {
        self.clock += secs;
    }

    pub fn noise_plan(&self) -> &NoisePlan {
        &self.noise_plan
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn entities_of(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.get(&kind).into_iter().flat_map(|t| t.values())
    }

    pub fn entity_count(&self, kind: EntityKind) -> usize {
        self.entities.get(&kind).map_or(0, |t| t.len())
    }

    pub fn total_entities(&self) -> usize {
        self.entities.values().map(|t| t.len()).sum()
    }

    /// Look up an entity by id across all kind tables.
    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.values().find_map(|t| t.get(id))
    }

    pub fn entity_of(&self, kind: EntityKind, id: &str) -> Option<&Entity> {
        self.entities.get(&kind).and_then(|t| t.get(id))
    }

    pub fn bed_ledger(&self) -> &BTreeMap<String, BedStatus> {
        &self.bed_ledger
    }

    pub fn bed_status(&self, bed_id: &str) -> Option<&BedStatus> {
        self.bed_ledger.get(bed_id)
    }

    pub fn occupied_bed_count(&self) -> usize {
        self.bed_ledger
            .values()
            .filter(|s| matches!(s, BedStatus::Occupied { .. }))
            .count()
    }

    /// Mint the next id for `kind` (max numeric suffix + 1).
    pub fn next_id(&self, kind: EntityKind) -> String {
        let max = self
            .entities_of(kind)
            .filter_map(|e| e.id.rsplit('-').next()?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("{}-{:04}", kind.id_prefix(), max + 1)
    }

    /// Core digest: canonical hash of entity tables and bed ledger. Excludes
    /// the audit log so end-states reached by different call orders compare
    /// equal.
    pub fn core_digest(&self) -> String {
        digest::core_digest(self)
    }

    /// Full digest: core state plus the audit log, for trajectory identity.
    pub fn full_digest(&self) -> String {
        digest::full_digest(self)
    }

    pub fn check_invariants(&self) -> Vec<Violation> {
        invariants::check_invariants(self)
    }

    /// Commit a validated delta and append the audit entry that carries it.
    /// On conservation failure nothing changes and no entry is appended; the
    /// caller turns the error into a `conflict` result.
    pub fn apply_mutation(
        &mut self,
        ctx: AuditContext,
        delta: MutationDelta,
    ) -> Result<u64, WorldError> {
        self.validate_delta(&delta)?;
        for entity in &delta.created {
            self.entities
                .entry(entity.kind)
                .or_default()
                .insert(entity.id.clone(), entity.clone());
            if entity.kind == EntityKind::Bed {
                self.bed_ledger
                    .insert(entity.id.clone(), BedStatus::Free);
            }
        }
        for update in &delta.updated {
            self.apply_field_update(update);
        }
        for bed_move in &delta.bed_moves {
            self.bed_ledger
                .insert(bed_move.bed_id.clone(), bed_move.to.clone());
        }
        Ok(self.push_entry(ctx, ResultSummary::Ok, None, Some(delta)))
    }

    /// Undo a previously applied delta. Used to check that apply/revert
    /// round-trips restore the core digest; never touches the audit log.
    pub fn revert_mutation(&mut self, delta: &MutationDelta) {
        for bed_move in delta.bed_moves.iter().rev() {
            self.bed_ledger
                .insert(bed_move.bed_id.clone(), bed_move.from.clone());
        }
        for update in delta.updated.iter().rev() {
            let inverse = FieldUpdate {
                id: update.id.clone(),
                field: update.field.clone(),
                old: update.new.clone(),
                new: update.old.clone(),
            };
            self.apply_field_update(&inverse);
        }
        for entity in delta.created.iter().rev() {
            if let Some(table) = self.entities.get_mut(&entity.kind) {
                table.remove(&entity.id);
            }
            if entity.kind == EntityKind::Bed {
                self.bed_ledger.remove(&entity.id);
            }
        }
    }

    fn apply_field_update(&mut self, update: &FieldUpdate) {
        let Some(entity) = self
            .entities
            .values_mut()
            .find_map(|t| t.get_mut(&update.id))
        else {
            return;
        };
        match &update.new {
            Some(AttrValue::Ref(target)) => entity.set_reference(&update.field, Some(target.clone())),
            Some(value) => {
                entity
                    .attributes
                    .insert(update.field.clone(), Attribute::new(value.clone()));
            }
            None => match &update.old {
                Some(AttrValue::Ref(_)) => entity.set_reference(&update.field, None),
                _ => {
                    entity.attributes.remove(&update.field);
                }
            },
        }
    }

    fn validate_delta(&self, delta: &MutationDelta) -> Result<(), WorldError> {
        for entity in &delta.created {
            if self.entity(&entity.id).is_some() {
                return Err(WorldError::ConservationViolation(format!(
                    "entity {} already exists",
                    entity.id
                )));
            }
        }
        for bed_move in &delta.bed_moves {
            let current = self.bed_ledger.get(&bed_move.bed_id).ok_or_else(|| {
                WorldError::ConservationViolation(format!("unknown bed {}", bed_move.bed_id))
            })?;
            if *current != bed_move.from {
                return Err(WorldError::ConservationViolation(format!(
                    "bed {} is {} not {}",
                    bed_move.bed_id,
                    current.label(),
                    bed_move.from.label()
                )));
            }
            if let BedStatus::Occupied { .. } = current {
                if let BedStatus::Occupied { .. } = bed_move.to {
                    return Err(WorldError::ConservationViolation(format!(
                        "bed {} already occupied",
                        bed_move.bed_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Append an ok entry for a call that mutated nothing.
    pub fn record_ok(&mut self, ctx: AuditContext) -> u64 {
        self.push_entry(ctx, ResultSummary::Ok, None, None)
    }

    /// Append an error entry.
    pub fn record_error(&mut self, ctx: AuditContext, code: ErrorCode) -> u64 {
        self.push_entry(ctx, ResultSummary::Error, Some(code), None)
    }

    fn push_entry(
        &mut self,
        ctx: AuditContext,
        result_summary: ResultSummary,
        error_code: Option<ErrorCode>,
        mutation_delta: Option<MutationDelta>,
    ) -> u64 {
        let seq = self.audit.len() as u64 + 1;
        self.audit.push(AuditEntry {
            seq,
            clock: self.clock,
            tool: ctx.tool,
            params: ctx.params,
            result_summary,
            error_code,
            mutation_delta,
        });
        seq
    }

    /// Export the canonical re-loadable dump document.
    pub fn dump(&self) -> WorldDump {
        dump::to_dump(self)
    }

    /// Rebuild a state from a dump document.
    pub fn from_dump(dump: WorldDump) -> Result<WorldState, WorldError> {
        dump::from_dump(dump)
    }

    pub(crate) fn parts_mut(
        &mut self,
    ) -> (
        &mut BTreeMap<EntityKind, BTreeMap<String, Entity>>,
        &mut BTreeMap<String, BedStatus>,
    ) {
        (&mut self.entities, &mut self.bed_ledger)
    }

    pub(crate) fn entities_tables(&self) -> &BTreeMap<EntityKind, BTreeMap<String, Entity>> {
        &self.entities
    }

    pub(crate) fn new_empty(seed: u64, profile_name: &str) -> WorldState {
        WorldState {
            seed,
            profile_name: profile_name.to_string(),
            clock: 0,
            entities: EntityKind::ALL.iter().map(|k| (*k, BTreeMap::new())).collect(),
            bed_ledger: BTreeMap::new(),
            audit: Vec::new(),
            noise_plan: NoisePlan::new(),
        }
    }

    pub(crate) fn set_noise_plan(&mut self, plan: NoisePlan) {
        self.noise_plan = plan;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_world(seed: u64) -> WorldState {
        WorldState::generate(seed, &GenerationProfile::desk()).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = desk_world(42);
        let b = desk_world(42);
        assert_eq!(a.core_digest(), b.core_digest());
        assert_eq!(a.full_digest(), b.full_digest());
        assert_eq!(a.noise_plan(), b.noise_plan());
    }

    #[test]
    fn different_seeds_differ_but_hold_invariants() {
        let a = desk_world(42);
        let b = desk_world(43);
        assert_ne!(a.core_digest(), b.core_digest());
        assert!(b.check_invariants().is_empty());
    }

    #[test]
    fn all_fourteen_kinds_populated() {
        let world = desk_world(42);
        for kind in EntityKind::ALL {
            assert!(world.entity_count(kind) > 0, "no entities of kind {kind}");
        }
    }

    #[test]
    fn generated_state_passes_invariants() {
        assert!(desk_world(42).check_invariants().is_empty());
    }

    #[test]
    fn zero_count_profile_is_invalid() {
        let mut profile = GenerationProfile::desk();
        profile.counts.insert(EntityKind::Encounter, 0);
        assert!(matches!(
            WorldState::generate(42, &profile),
            Err(WorldError::InvalidProfile(_))
        ));
    }

    #[test]
    fn dangling_reference_is_reported() {
        let mut world = desk_world(42);
        let patient_id = world
            .entities_of(EntityKind::Encounter)
            .next()
            .and_then(|e| e.reference("patient_id"))
            .unwrap()
            .to_string();
        world
            .parts_mut()
            .0
            .get_mut(&EntityKind::Patient)
            .unwrap()
            .remove(&patient_id);
        let violations = world.check_invariants();
        assert!(violations
            .iter()
            .any(|v| v.invariant == "dangling-reference" && v.entity_ids.contains(&patient_id)));
    }

    #[test]
    fn bed_double_assignment_is_reported() {
        let mut world = desk_world(42);
        // Find a bed held by one encounter and point a second encounter at it.
        let (bed_id, holder) = world
            .bed_ledger()
            .iter()
            .find_map(|(bed, status)| match status {
                BedStatus::Occupied { encounter_id } => {
                    Some((bed.clone(), encounter_id.clone()))
                }
                BedStatus::Free => None,
            })
            .unwrap();
        let other = world
            .entities_of(EntityKind::Encounter)
            .find(|e| e.id != holder && e.reference("bed_id").is_none())
            .unwrap()
            .id
            .clone();
        world
            .parts_mut()
            .0
            .get_mut(&EntityKind::Encounter)
            .unwrap()
            .get_mut(&other)
            .unwrap()
            .set_reference("bed_id", Some(bed_id.clone()));
        let violations = world.check_invariants();
        assert!(
            violations
                .iter()
                .any(|v| v.invariant == "bed-conservation"),
            "got {violations:?}"
        );
    }

    #[test]
    fn apply_then_revert_restores_core_digest() {
        let mut world = desk_world(42);
        let before = world.core_digest();
        let new_id = world.next_id(EntityKind::Patient);
        let enc = world.entities_of(EntityKind::Encounter).next().unwrap();
        let enc_id = enc.id.clone();
        let old_complaint = enc.attr("chief_complaint").cloned();
        let delta = MutationDelta {
            created: vec![Entity::new(new_id, EntityKind::Patient)
                .with_attr("name", AttrValue::Str("Test Subject".into()))],
            updated: vec![FieldUpdate {
                id: enc_id,
                field: "chief_complaint".to_string(),
                old: old_complaint,
                new: Some(AttrValue::Str("revised".into())),
            }],
            bed_moves: vec![],
        };
        world
            .apply_mutation(AuditContext::new("registerPatient", BTreeMap::new()), delta.clone())
            .unwrap();
        assert_ne!(world.core_digest(), before);
        world.revert_mutation(&delta);
        assert_eq!(world.core_digest(), before);
    }

    #[test]
    fn audit_is_append_only_under_mutation() {
        let mut world = desk_world(42);
        world.record_ok(AuditContext::new("searchPatients", BTreeMap::new()));
        let snapshot = world.audit().to_vec();
        world.record_error(
            AuditContext::new("searchPatients", BTreeMap::new()),
            ErrorCode::MissingParam,
        );
        assert_eq!(world.audit().len(), snapshot.len() + 1);
        assert_eq!(&world.audit()[..snapshot.len()], &snapshot[..]);
        let seqs: Vec<u64> = world.audit().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    }

    #[test]
    fn conflicting_bed_move_rolls_back() {
        let mut world = desk_world(42);
        let before = world.core_digest();
        let audit_len = world.audit().len();
        let (bed_id, _) = world
            .bed_ledger()
            .iter()
            .find(|(_, s)| matches!(s, BedStatus::Occupied { .. }))
            .map(|(b, s)| (b.clone(), s.clone()))
            .unwrap();
        let delta = MutationDelta {
            created: vec![],
            updated: vec![],
            bed_moves: vec![BedMove {
                bed_id,
                from: BedStatus::Free,
                to: BedStatus::Occupied {
                    encounter_id: "enc-9999".into(),
                },
            }],
        };
        let err = world
            .apply_mutation(AuditContext::new("updateEncounter", BTreeMap::new()), delta)
            .unwrap_err();
        assert!(matches!(err, WorldError::ConservationViolation(_)));
        assert_eq!(world.core_digest(), before);
        assert_eq!(world.audit().len(), audit_len);
    }

    #[test]
    fn dump_round_trips() {
        let world = desk_world(42);
        let dump = world.dump();
        let reloaded = WorldState::from_dump(dump).unwrap();
        assert_eq!(world.core_digest(), reloaded.core_digest());
        assert_eq!(world.clock(), reloaded.clock());
        assert_eq!(world.noise_plan(), reloaded.noise_plan());
    }
}
