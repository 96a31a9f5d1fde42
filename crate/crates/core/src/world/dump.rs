//! Canonical, re-loadable world dump document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BedStatus, Entity, EntityKind, NoisePlan, WorldError, WorldState};

pub const DUMP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldDump {
    pub format_version: u32,
    pub seed: u64,
    pub profile: String,
    pub clock: i64,
    pub entities: BTreeMap<EntityKind, BTreeMap<String, Entity>>,
    pub bed_ledger: BTreeMap<String, BedStatus>,
    pub noise_plan: NoisePlan,
}

impl WorldDump {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("dump serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<WorldDump, WorldError> {
        serde_json::from_str(text).map_err(|e| WorldError::MalformedDump(e.to_string()))
    }
}

pub fn to_dump(state: &WorldState) -> WorldDump {
    WorldDump {
        format_version: DUMP_FORMAT_VERSION,
        seed: state.seed(),
        profile: state.profile_name().to_string(),
        clock: state.clock(),
        entities: state.entities_tables().clone(),
        bed_ledger: state.bed_ledger().clone(),
        noise_plan: state.noise_plan().clone(),
    }
}

pub fn from_dump(dump: WorldDump) -> Result<WorldState, WorldError> {
    if dump.format_version != DUMP_FORMAT_VERSION {
        return Err(WorldError::MalformedDump(format!(
            "unsupported dump format version {}",
            dump.format_version
        )));
    }
    let mut state = WorldState::new_empty(dump.seed, &dump.profile);
    state.set_clock(dump.clock);
    state.set_noise_plan(dump.noise_plan);
    let (entities, beds) = state.parts_mut();
    *entities = dump.entities;
    *beds = dump.bed_ledger;
    for kind in EntityKind::ALL {
        entities.entry(kind).or_default();
    }
    Ok(state)
}
