//! Command-line overrides for every scenario field.

use std::path::Path;

use clap::Args;
use earsim_core::mobility::Point;
use earsim_core::scenario::{default_connection_count, CommonPowerSource, WindowAnchor};
use earsim_core::{load_scenario, ConnectionSpec, EnergyModel, Protocol, ScenarioConfig};
use serde::de::DeserializeOwned;

use crate::CliError;

/// Parses an upper-snake enum name, accepting any case and dashes.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let name = s.trim().to_ascii_uppercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(name)).map_err(|_| format!("unrecognized value `{s}`"))
}

fn parse_json<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Debug, Default)]
pub struct ConfigOverrides {
    #[arg(long, visible_alias = "nodes")]
    pub node_count: Option<usize>,
    #[arg(long)]
    pub area_width: Option<f64>,
    #[arg(long)]
    pub area_height: Option<f64>,
    #[arg(long, visible_alias = "connections")]
    pub connection_count: Option<usize>,
    #[arg(long)]
    pub pause_time: Option<f64>,
    #[arg(long)]
    pub speed_min: Option<f64>,
    #[arg(long)]
    pub speed_max: Option<f64>,
    #[arg(long)]
    pub traffic_packet_size: Option<u32>,
    #[arg(long)]
    pub traffic_rate: Option<f64>,
    #[arg(long)]
    pub sim_duration: Option<f64>,
    #[arg(long)]
    pub initial_energy: Option<f64>,
    #[arg(long)]
    pub tx_power_common: Option<f64>,
    #[arg(long)]
    pub rx_power: Option<f64>,
    #[arg(long)]
    pub idle_power: Option<f64>,
    #[arg(long)]
    pub sleep_power: Option<f64>,
    #[arg(long)]
    pub transition_power: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rx_threshold: Option<f64>,
    #[arg(long)]
    pub common_range: Option<f64>,
    #[arg(long)]
    pub t_wait: Option<f64>,
    #[arg(long, value_parser = parse_enum::<Protocol>)]
    pub protocol: Option<Protocol>,
    #[arg(long, value_parser = parse_enum::<EnergyModel>)]
    pub energy_model: Option<EnergyModel>,
    #[arg(long, visible_alias = "seed")]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub tx_gain: Option<f64>,
    #[arg(long)]
    pub rx_gain: Option<f64>,
    #[arg(long)]
    pub control_packet_size: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(bool))]
    pub reply_all: Option<bool>,
    #[arg(long, value_parser = clap::value_parser!(bool))]
    pub intermediate_collect: Option<bool>,
    #[arg(long, value_parser = parse_enum::<WindowAnchor>)]
    pub window_anchor: Option<WindowAnchor>,
    #[arg(long)]
    pub power_margin: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(bool))]
    pub charge_overhearers: Option<bool>,
    #[arg(long, value_parser = parse_enum::<CommonPowerSource>)]
    pub common_power_source: Option<CommonPowerSource>,
    #[arg(long)]
    pub tx_overhead_power: Option<f64>,
    #[arg(long)]
    pub rreq_retries: Option<u32>,
    #[arg(long)]
    pub rreq_backoff: Option<f64>,
    #[arg(long)]
    pub buffer_capacity: Option<usize>,
    #[arg(long)]
    pub hop_limit: Option<u32>,
    #[arg(long)]
    pub lifetime_k: Option<usize>,
    #[arg(long)]
    pub alive_threshold: Option<f64>,
    /// JSON array of `{"x":..,"y":..}` points.
    #[arg(long, value_parser = parse_json::<Vec<Point>>)]
    pub static_positions: Option<Vec<Point>>,
    /// JSON array of `{"source":..,"destination":..,"start_time":..}`.
    #[arg(long, value_parser = parse_json::<Vec<ConnectionSpec>>)]
    pub flows: Option<Vec<ConnectionSpec>>,
}

macro_rules! apply_fields {
    ($src:expr, $dst:expr, $($field:ident),* $(,)?) => {
        $( if let Some(v) = $src.$field.clone() { $dst.$field = v; } )*
    };
}

impl ConfigOverrides {
    /// Applies the overrides. A new node count re-derives the connection
    /// count unless it is pinned here or in the scenario file.
    pub fn apply(&self, cfg: &mut ScenarioConfig, connections_pinned: bool) {
        apply_fields!(
            self, cfg, node_count, area_width, area_height, connection_count, pause_time, speed_min, speed_max,
            traffic_packet_size, traffic_rate, sim_duration, initial_energy, tx_power_common, rx_power, idle_power,
            sleep_power, transition_power, bandwidth, frequency, rx_threshold, common_range, t_wait, protocol,
            energy_model, rng_seed, tx_gain, rx_gain, control_packet_size, intermediate_collect, window_anchor,
            power_margin, charge_overhearers, common_power_source, tx_overhead_power, rreq_retries, rreq_backoff,
            buffer_capacity, hop_limit, alive_threshold,
        );
        if self.reply_all.is_some() {
            cfg.reply_all = self.reply_all;
        }
        if self.lifetime_k.is_some() {
            cfg.lifetime_k = self.lifetime_k;
        }
        if self.static_positions.is_some() {
            cfg.static_positions = self.static_positions.clone();
        }
        if let Some(flows) = &self.flows {
            cfg.connection_count = flows.len();
            cfg.flows = Some(flows.clone());
        }
        if let Some(n) = self.node_count {
            if !connections_pinned && self.connection_count.is_none() && self.flows.is_none() {
                cfg.connection_count = default_connection_count(n);
            }
        }
    }

    pub fn pins_connections(&self) -> bool {
        self.connection_count.is_some() || self.flows.is_some()
    }
}

/// A loaded scenario and whether it fixes the connection count itself.
#[derive(Clone, Debug)]
pub struct BaseScenario {
    pub cfg: ScenarioConfig,
    pub connections_pinned: bool,
}

impl BaseScenario {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(BaseScenario {
                cfg: earsim_core::default_scenario(),
                connections_pinned: false,
            });
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg = load_scenario(&text)?;
        let connections_pinned = serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .is_some_and(|v| v.get("connection_count").is_some() || v.get("flows").is_some());
        Ok(BaseScenario { cfg, connections_pinned })
    }

    /// The scenario with `overrides` applied, validated.
    pub fn with(&self, overrides: &ConfigOverrides) -> Result<ScenarioConfig, CliError> {
        let mut cfg = self.cfg.clone();
        overrides.apply(&mut cfg, self.connections_pinned);
        cfg.validate()?;
        Ok(cfg)
    }
}
