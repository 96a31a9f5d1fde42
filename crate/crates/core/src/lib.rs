//! Core engine for a deterministic, safety-gated evaluation environment for
//! tool-using agents.
//!
//! The engine is organized around a seeded entity-graph world state
//! ([`world`]) exposed through a fixed 24-tool protocol surface
//! ([`toolserver`]) with an append-only audit log. Agent behaviour is graded
//! by a binary-criteria rubric ([`rubric`]) whose reward collapses to zero on
//! any safety-critical violation. Trials are orchestrated by the [`harness`],
//! reliability statistics live in [`metrics`], and [`overlay`] implements the
//! deterministic audit of an external judge, including the six-label
//! disagreement taxonomy and entry tiering.

pub mod harness;
pub mod metrics;
pub mod overlay;
pub mod remote;
pub mod rubric;
pub mod tasks;
pub mod toolserver;
pub mod world;
