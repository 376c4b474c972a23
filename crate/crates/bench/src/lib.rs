//! Scenario presets shared by the benchmarks.

use earsim_core::{default_scenario, Protocol, ScenarioConfig};

/// The default scenario scaled to `nodes` nodes, ⌈nodes/2⌉ flows and
/// `duration` seconds.
pub fn scaled_scenario(protocol: Protocol, nodes: usize, duration: f64) -> ScenarioConfig {
    let mut c = default_scenario();
    c.protocol = protocol;
    c.node_count = nodes;
    c.connection_count = earsim_core::scenario::default_connection_count(nodes);
    c.sim_duration = duration;
    c
}
