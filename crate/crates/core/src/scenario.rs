//! Scenario description: every knob of a run, its defaults, JSON loading
//! and validation, and seeded generation of CBR source/destination pairs.

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyModel;
use crate::mobility::{Point, WaypointParams};
use crate::radio::{self, Dbm, RadioParams, Watts};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    Aodv,
    Ear,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Aodv => "AODV",
            Protocol::Ear => "EAR",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AODV" => Ok(Protocol::Aodv),
            "EAR" | "EA-AODV" => Ok(Protocol::Ear),
            _ => Err(format!("unknown protocol `{s}` (expected AODV or EAR)")),
        }
    }
}

/// When the origin's reply-collection window opens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WindowAnchor {
    FirstRrep,
    RreqSent,
}

/// Where the wattage of a common-range transmission comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommonPowerSource {
    /// `tx_power_common` watts.
    Configured,
    /// Friis power needed to reach `common_range`.
    Friis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub source: NodeId,
    pub destination: NodeId,
    pub start_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub area_width: f64,
    pub area_height: f64,
    pub connection_count: usize,
    pub pause_time: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Data packet size in bytes.
    pub traffic_packet_size: u32,
    /// Packets per second per flow.
    pub traffic_rate: f64,
    pub sim_duration: f64,
    pub initial_energy: f64,
    pub tx_power_common: f64,
    pub rx_power: f64,
    pub idle_power: f64,
    pub sleep_power: f64,
    pub transition_power: f64,
    /// Channel rate in bit/s.
    pub bandwidth: f64,
    pub frequency: f64,
    /// Receive threshold in dBm.
    pub rx_threshold: f64,
    pub common_range: f64,
    pub t_wait: f64,
    pub protocol: Protocol,
    pub energy_model: EnergyModel,
    pub rng_seed: u64,

    pub tx_gain: f64,
    pub rx_gain: f64,
    /// RREQ / RREP / RERR size in bytes.
    pub control_packet_size: u32,
    /// Destination answers every RREQ copy inside `t_wait`. Unset means on
    /// for EAR, off for AODV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply_all: Option<bool>,
    /// Intermediate nodes also collect RREPs before choosing a next hop.
    pub intermediate_collect: bool,
    pub window_anchor: WindowAnchor,
    /// Multiplier applied to the link distance before pricing it.
    pub power_margin: f64,
    /// Unicast data also costs receive energy at every in-range listener.
    pub charge_overhearers: bool,
    pub common_power_source: CommonPowerSource,
    /// Electronics draw added to every transmit, watts.
    pub tx_overhead_power: f64,
    pub rreq_retries: u32,
    /// First discovery retry delay; doubles per attempt.
    pub rreq_backoff: f64,
    /// Buffered data packets per destination while discovery runs.
    pub buffer_capacity: usize,
    pub hop_limit: u32,
    /// Deaths counted by the lifetime metric. Unset means ⌈node_count/2⌉.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifetime_k: Option<usize>,
    pub alive_threshold: f64,
    /// Pins every node at a fixed position (disables mobility).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_positions: Option<Vec<Point>>,
    /// Explicit CBR flows instead of random pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<ConnectionSpec>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        default_scenario()
    }
}

/// ⌈n/2⌉ connections, capped by the number of ordered pairs.
pub fn default_connection_count(node_count: usize) -> usize {
    node_count.div_ceil(2).min(node_count * node_count.saturating_sub(1))
}

/// Baseline scenario: 50 nodes on 1000 m × 1000 m, 25 CBR flows of
/// 512-byte packets at 4 packets/s for 200 s, 100 J batteries.
pub fn default_scenario() -> ScenarioConfig {
    ScenarioConfig {
        node_count: 50,
        area_width: 1000.0,
        area_height: 1000.0,
        connection_count: 25,
        pause_time: 0.0,
        speed_min: 10.0,
        speed_max: 10.0,
        traffic_packet_size: 512,
        traffic_rate: 4.0,
        sim_duration: 200.0,
        initial_energy: 100.0,
        tx_power_common: 5.0,
        rx_power: 1.0,
        idle_power: 0.0005,
        sleep_power: 0.0002,
        transition_power: 0.03,
        bandwidth: 2e6,
        frequency: 2.4e9,
        rx_threshold: -84.0,
        common_range: 250.0,
        t_wait: 0.1,
        protocol: Protocol::Ear,
        energy_model: EnergyModel::PowerDuration,
        rng_seed: 1,
        tx_gain: 1.0,
        rx_gain: 1.0,
        control_packet_size: 64,
        reply_all: None,
        intermediate_collect: false,
        window_anchor: WindowAnchor::FirstRrep,
        power_margin: 1.0,
        charge_overhearers: false,
        common_power_source: CommonPowerSource::Configured,
        tx_overhead_power: 0.0,
        rreq_retries: 2,
        rreq_backoff: 0.5,
        buffer_capacity: 64,
        hop_limit: 64,
        lifetime_k: None,
        alive_threshold: 0.5,
        static_positions: None,
        flows: None,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: `{field}` violates {rule}")]
    Invalid { field: &'static str, rule: String },
}

fn invalid(field: &'static str, rule: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        rule: rule.into(),
    }
}

fn parse_error(e: serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses a flat JSON scenario object. Missing fields take their default;
/// `connection_count` is re-derived from `node_count` (or the explicit
/// flow list) when absent.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let mut cfg: ScenarioConfig = serde_json::from_str(text).map_err(parse_error)?;
    let keys: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(parse_error)?;
    if !keys.contains_key("connection_count") {
        cfg.connection_count = match &cfg.flows {
            Some(flows) => flows.len(),
            None => default_connection_count(cfg.node_count),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("area_width", self.area_width),
            ("area_height", self.area_height),
            ("initial_energy", self.initial_energy),
            ("t_wait", self.t_wait),
            ("common_range", self.common_range),
            ("traffic_rate", self.traffic_rate),
            ("sim_duration", self.sim_duration),
            ("bandwidth", self.bandwidth),
            ("frequency", self.frequency),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("power_margin", self.power_margin),
            ("rreq_backoff", self.rreq_backoff),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("{field} > 0")));
            }
        }
        let non_negative = [
            ("pause_time", self.pause_time),
            ("tx_power_common", self.tx_power_common),
            ("rx_power", self.rx_power),
            ("idle_power", self.idle_power),
            ("sleep_power", self.sleep_power),
            ("transition_power", self.transition_power),
            ("tx_overhead_power", self.tx_overhead_power),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("{field} ≥ 0")));
            }
        }
        if !self.rx_threshold.is_finite() {
            return Err(invalid("rx_threshold", "finite dBm value"));
        }
        if self.node_count == 0 {
            return Err(invalid("node_count", "node_count > 0"));
        }
        if !(self.speed_min > 0.0) {
            return Err(invalid("speed_min", "0 < speed_min"));
        }
        if !(self.speed_min <= self.speed_max) || !self.speed_max.is_finite() {
            return Err(invalid("speed_max", "speed_min ≤ speed_max"));
        }
        let pairs = self.node_count * (self.node_count - 1);
        if self.connection_count > pairs {
            return Err(invalid("connection_count", "connection_count ≤ node_count·(node_count−1)"));
        }
        if !(0.0..=1.0).contains(&self.alive_threshold) {
            return Err(invalid("alive_threshold", "0 ≤ alive_threshold ≤ 1"));
        }
        if self.lifetime_k == Some(0) {
            return Err(invalid("lifetime_k", "lifetime_k ≥ 1"));
        }
        if self.hop_limit == 0 {
            return Err(invalid("hop_limit", "hop_limit ≥ 1"));
        }
        if let Some(positions) = &self.static_positions {
            if positions.len() != self.node_count {
                return Err(invalid("static_positions", "one position per node"));
            }
            let inside = |p: &Point| {
                (0.0..=self.area_width).contains(&p.x) && (0.0..=self.area_height).contains(&p.y)
            };
            if !positions.iter().all(inside) {
                return Err(invalid("static_positions", "positions inside the arena"));
            }
        }
        if let Some(flows) = &self.flows {
            if flows.len() != self.connection_count {
                return Err(invalid("flows", "flows.len() = connection_count"));
            }
            for f in flows {
                if f.source == f.destination {
                    return Err(invalid("flows", "source ≠ destination"));
                }
                if f.source.index() >= self.node_count || f.destination.index() >= self.node_count {
                    return Err(invalid("flows", "node ids < node_count"));
                }
                if !(f.start_time >= 0.0 && f.start_time.is_finite()) {
                    return Err(invalid("flows", "start_time ≥ 0"));
                }
            }
        }
        Ok(())
    }

    pub fn radio_params(&self) -> RadioParams {
        RadioParams {
            frequency: self.frequency,
            tx_gain: self.tx_gain,
            rx_gain: self.rx_gain,
            rx_threshold: Dbm(self.rx_threshold),
        }
    }

    /// Friis power that reaches `common_range`.
    pub fn common_power_dbm(&self) -> Dbm {
        radio::common_range_power(&self.radio_params(), self.common_range)
            .expect("validated common_range is positive")
    }

    /// Wattage charged for a common-range transmission.
    pub fn common_power_watts(&self) -> Watts {
        match self.common_power_source {
            CommonPowerSource::Configured => Watts(self.tx_power_common),
            CommonPowerSource::Friis => self.common_power_dbm().to_watts(),
        }
    }

    /// Wattage charged for a transmission at `pt`, scaled so that the
    /// common-range power costs exactly [`Self::common_power_watts`].
    pub fn tx_watts(&self, pt: Dbm) -> Watts {
        let scale = 10f64.powf((pt.0 - self.common_power_dbm().0) / 10.0);
        Watts(self.common_power_watts().0 * scale)
    }

    pub fn reply_all_effective(&self) -> bool {
        self.reply_all.unwrap_or(self.protocol == Protocol::Ear)
    }

    pub fn lifetime_k_effective(&self) -> usize {
        self.lifetime_k.unwrap_or_else(|| self.node_count.div_ceil(2))
    }

    pub fn waypoint_params(&self) -> WaypointParams {
        WaypointParams {
            area_width: self.area_width,
            area_height: self.area_height,
            speed_min: self.speed_min,
            speed_max: self.speed_max,
            pause_time: self.pause_time,
        }
    }
}

/// Generator for traffic pairs (stream 0 of the scenario seed; mobility
/// uses the other streams).
pub fn traffic_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `connection_count` distinct ordered (source, destination) pairs drawn
/// uniformly without replacement, all starting at t = 0.
pub fn generate_connections(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<ConnectionSpec> {
    let n = cfg.node_count;
    if n < 2 || cfg.connection_count == 0 {
        return Vec::new();
    }
    let pairs = n * (n - 1);
    index::sample(rng, pairs, cfg.connection_count)
        .into_iter()
        .map(|i| {
            let source = i / (n - 1);
            let r = i % (n - 1);
            let destination = if r >= source { r + 1 } else { r };
            ConnectionSpec {
                source: source.into(),
                destination: destination.into(),
                start_time: 0.0,
            }
        })
        .collect()
}

/// Flows used by a run: the explicit list if given, otherwise generated.
pub fn connections_for(cfg: &ScenarioConfig) -> Vec<ConnectionSpec> {
    match &cfg.flows {
        Some(flows) => flows.clone(),
        None => generate_connections(cfg, &mut traffic_rng(cfg.rng_seed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn defaults_match_reference_setup() {
        let c = default_scenario();
        assert_eq!(c.node_count, 50);
        assert_eq!(c.initial_energy, 100.0);
        assert_eq!(c.idle_power, 0.0005);
        assert_eq!(c.sleep_power, 0.0002);
        assert_eq!(c.transition_power, 0.03);
        assert_eq!(c.rx_threshold, -84.0);
        assert_eq!((c.area_width, c.area_height), (1000.0, 1000.0));
        assert_eq!(c.connection_count, 25);
        assert_eq!((c.traffic_packet_size, c.traffic_rate, c.sim_duration), (512, 4.0, 200.0));
        assert_eq!((c.tx_power_common, c.rx_power), (5.0, 1.0));
        assert_eq!((c.bandwidth, c.frequency, c.common_range), (2e6, 2.4e9, 250.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(load_scenario("").unwrap(), default_scenario());
        assert_eq!(load_scenario("  {}  ").unwrap(), default_scenario());
    }

    #[test]
    fn connection_count_follows_node_count() {
        let c = load_scenario(r#"{"node_count": 20}"#).unwrap();
        assert_eq!(c.node_count, 20);
        assert_eq!(c.connection_count, 10);
        let c = load_scenario(r#"{"node_count": 21}"#).unwrap();
        assert_eq!(c.connection_count, 11);
        let c = load_scenario(r#"{"node_count": 20, "connection_count": 3}"#).unwrap();
        assert_eq!(c.connection_count, 3);
        let c = load_scenario(r#"{"node_count": 1}"#).unwrap();
        assert_eq!(c.connection_count, 0);
    }

    #[test]
    fn speed_order_is_validated() {
        let err = load_scenario(r#"{"speed_min": 10, "speed_max": 5}"#).unwrap_err();
        assert!(err.to_string().contains("speed_min ≤ speed_max"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = load_scenario("{\n  \"node_cuont\": 3\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("node_cuont"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_violations_are_rejected() {
        for doc in [
            r#"{"area_width": 0}"#,
            r#"{"speed_min": 0}"#,
            r#"{"initial_energy": -1}"#,
            r#"{"t_wait": 0}"#,
            r#"{"common_range": 0}"#,
            r#"{"rx_power": -0.1}"#,
            r#"{"node_count": 3, "connection_count": 7}"#,
            r#"{"node_count": 2, "static_positions": [{"x": 1, "y": 1}]}"#,
            r#"{"node_count": 2, "flows": [{"source": 1, "destination": 1, "start_time": 0}]}"#,
        ] {
            assert!(matches!(load_scenario(doc), Err(ConfigError::Invalid { .. })), "{doc}");
        }
    }

    #[test]
    fn explicit_flows_set_connection_count() {
        let c = load_scenario(
            r#"{"node_count": 2, "flows": [{"source": 0, "destination": 1, "start_time": 0}]}"#,
        )
        .unwrap();
        assert_eq!(c.connection_count, 1);
        assert_eq!(connections_for(&c).len(), 1);
    }

    #[test]
    fn two_nodes_one_pair() {
        let mut c = default_scenario();
        c.node_count = 2;
        c.connection_count = 1;
        let flows = generate_connections(&c, &mut traffic_rng(3));
        assert_eq!(flows.len(), 1);
        assert_ne!(flows[0].source, flows[0].destination);
    }

    #[test]
    fn default_connections_are_distinct() {
        let c = default_scenario();
        let a = generate_connections(&c, &mut traffic_rng(42));
        let b = generate_connections(&c, &mut traffic_rng(42));
        assert_eq!(a, b);
        assert_eq!(a.len(), 25);
        let mut seen = HashSet::new();
        for f in &a {
            assert_ne!(f.source, f.destination);
            assert!(f.source.index() < 50 && f.destination.index() < 50);
            assert_eq!(f.start_time, 0.0);
            assert!(seen.insert((f.source, f.destination)));
        }
    }

    #[test]
    fn full_pair_set_is_a_permutation() {
        let mut c = default_scenario();
        c.node_count = 4;
        c.connection_count = 12;
        let flows = generate_connections(&c, &mut traffic_rng(9));
        let set: HashSet<_> = flows.iter().map(|f| (f.source, f.destination)).collect();
        assert_eq!(set.len(), 12);
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            2usize..80,
            1.0f64..2000.0,
            0.1f64..30.0,
            0.0f64..20.0,
            any::<u64>(),
            any::<bool>(),
            prop::option::of(any::<bool>()),
            0.5f64..2.0,
        )
            .prop_map(|(n, w, smin, extra, seed, ear, reply_all, margin)| {
                let mut c = default_scenario();
                c.node_count = n;
                c.connection_count = default_connection_count(n);
                c.area_width = w;
                c.speed_min = smin;
                c.speed_max = smin + extra;
                c.rng_seed = seed;
                c.protocol = if ear { Protocol::Ear } else { Protocol::Aodv };
                c.reply_all = reply_all;
                c.power_margin = margin;
                c
            })
    }

    proptest! {
        #[test]
        fn json_round_trip(cfg in arb_config()) {
            prop_assert!(cfg.validate().is_ok());
            let back = load_scenario(&cfg.to_json()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
