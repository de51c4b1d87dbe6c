//! Similarity-based cluster formation, neighborhood-size leader election
//! and quorum-gated consensus task dispatch for IIoT networks, together
//! with a deterministic discrete-event wireless simulator and an
//! experiment runner.
//!
//! The crate is organized around pure state machines: [`node::NodeState`]
//! and [`ap::ApState`] turn delivered messages into effect lists, and
//! [`engine::run`] interprets those effects over a seeded event queue with
//! a unit-disk broadcast channel. Every run with the same scenario and
//! seed produces a bit-identical [`trace`]. See the `examples/` directory
//! for runnable entry points per capability.

pub mod ap;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod node;
pub mod scenario;
pub mod similarity;
pub mod trace;

pub use engine::{run, RunResult};
pub use scenario::{parse_scenario, validate_scenario, ScenarioConfig};
pub use similarity::{capability_similarity, is_similar, required_subset, SimilarityThreshold};
