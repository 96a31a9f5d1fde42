//! Stable state digests over canonical serialization. All maps are ordered
//! (`BTreeMap`), so serialization order is independent of insertion order.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::WorldState;

#[derive(Serialize)]
struct CoreView<'a> {
    entities: &'a std::collections::BTreeMap<
        super::EntityKind,
        std::collections::BTreeMap<String, super::Entity>,
    >,
    bed_ledger: &'a std::collections::BTreeMap<String, super::BedStatus>,
}

#[derive(Serialize)]
struct FullView<'a> {
    #[serde(flatten)]
    core: CoreView<'a>,
    audit: &'a [super::AuditEntry],
}

fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("state serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    format!("{:x}", hasher.finalize())
}

pub fn core_digest(state: &WorldState) -> String {
    hash_json(&CoreView {
        entities: state.entities_tables(),
        bed_ledger: state.bed_ledger(),
    })
}

pub fn full_digest(state: &WorldState) -> String {
    hash_json(&FullView {
        core: CoreView {
            entities: state.entities_tables(),
            bed_ledger: state.bed_ledger(),
        },
        audit: state.audit(),
    })
}
