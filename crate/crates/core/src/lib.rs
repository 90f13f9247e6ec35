//! Deterministic simulation of miniature underwater gliders operating with a
//! surface vessel and a multirotor for deployment, recovery and radio relay.

pub mod agents;
pub mod comms;
pub mod coordinator;
pub mod engine;
pub mod ids;
pub mod physics;
pub mod powertrain;
pub mod registry;
pub mod sa;
pub mod scenario;

pub use ids::{VehicleId, VehicleKind};
pub use engine::run::{run_in_memory, run_to_dir, RunSummary};
pub use engine::World;
pub use scenario::{load_scenario, load_scenario_file, ScenarioConfig};
