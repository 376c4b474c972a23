//! Deterministic discrete-event simulator for mobile ad hoc networks.
//!
//! Two routing protocols run on the same idealized radio:
//!
//! * plain AODV, where every transmission uses the common-range power, and
//! * EAR, an energy-aware AODV variant whose route replies carry the sender's
//!   coordinates. The route origin collects replies for a short window, picks
//!   the nearest delivering neighbour and prices each data link with the
//!   Friis free-space equation.
//!
//! The crate is organised bottom-up: [`radio`], [`mobility`] and [`energy`]
//! are self-contained models, [`routing`] and [`ear`] hold per-node protocol
//! state, [`engine`] drives everything from a single event queue and
//! [`metrics`] reduces a finished run to the lifetime / energy / alive-node
//! figures.

pub mod ear;
pub mod energy;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod routing;
pub mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use energy::{EnergyCause, EnergyLedger, EnergyModel};
pub use engine::{run, RunOutput, Simulation};
pub use metrics::{Lifetime, MetricsReport};
pub use mobility::{distance, Mobility, Point};
pub use radio::{Dbm, RadioParams, Watts};
pub use scenario::{default_scenario, load_scenario, ConnectionSpec, Protocol, ScenarioConfig};

/// Index of a node in a scenario, `0..node_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
