//! Cooperative V2X perception feeding an LLM safety-reasoning loop.

pub mod fusion;
pub mod geom;
pub mod reasoning;
pub mod sensing;
pub mod v2x;
pub mod world;
pub mod metrics;
pub mod runner;
pub mod scenarios;

pub use fusion::{FusionCenter, HeadsConfig, PerceptionProduct};
pub use geom::{OrientedRect, Pose};
pub use reasoning::{CorpusStore, LlmClient, MockLlm, SafetyAlert};
pub use runner::{run_episode, EpisodeSummary, RunError, RunOptions, Session, TickRecord};
pub use sensing::{BevGrid, Detection3D, GridSpec, SensorConfig, SensorFrame};
pub use world::{load_scenario, ActorId, ObjectClass, Scenario, WorldState};
