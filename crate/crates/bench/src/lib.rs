//! Shared fixtures for the benchmarks.

use sentinel_core::scenarios::bundled;
use sentinel_core::sensing::{sense_frame, SensingAgent};
use sentinel_core::{BevGrid, GridSpec, Scenario, SensorConfig, SensorFrame, WorldState};

pub fn scenario(name: &str) -> Scenario {
    bundled(name).unwrap_or_else(|| panic!("no bundled scenario {name}"))
}

/// The ego's sensing setup at the scenario's first tick.
pub fn first_view(name: &str) -> (WorldState, SensingAgent) {
    let scenario = scenario(name);
    let world = WorldState::initial(&scenario);
    let ego = world.actors.iter().find(|a| a.id == scenario.ego_id()).expect("ego exists");
    let agent = SensingAgent { id: ego.id, pose: ego.pose(), config: SensorConfig::default() };
    (world, agent)
}

pub fn sensed_frame(name: &str) -> SensorFrame {
    let (world, agent) = first_view(name);
    sense_frame(&world, &agent, &GridSpec::default(), 1)
}

/// `n` default-sized grids with a cheap deterministic pattern.
pub fn grids(n: usize) -> Vec<BevGrid> {
    (0..n)
        .map(|k| {
            let mut g = BevGrid::filled(GridSpec::default(), 0, 0.5);
            for (i, c) in g.cells.iter_mut().enumerate() {
                *c = ((i * 31 + k * 17) % 101) as f64 / 100.0;
            }
            g
        })
        .collect()
}
