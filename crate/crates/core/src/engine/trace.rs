//! Optional per-run traces and their on-disk layout.
//!
//! Every file is plain CSV with a header row. None of the columns can hold
//! a comma or a quote, so no quoting is needed.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::energy::RadioState;
use crate::metrics::MetricsReport;
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// Mobility and energy sampling period in seconds.
    pub sample_interval: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { sample_interval: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoutingEvent {
    RreqTx,
    RreqRx,
    RrepTx,
    RrepRx,
    RerrTx,
    RouteInstall,
    RouteInvalidate,
}

impl RoutingEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            RoutingEvent::RreqTx => "RREQ_TX",
            RoutingEvent::RreqRx => "RREQ_RX",
            RoutingEvent::RrepTx => "RREP_TX",
            RoutingEvent::RrepRx => "RREP_RX",
            RoutingEvent::RerrTx => "RERR_TX",
            RoutingEvent::RouteInstall => "ROUTE_INSTALL",
            RoutingEvent::RouteInvalidate => "ROUTE_INVALIDATE",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EarDecision {
    pub time: f64,
    pub node: NodeId,
    pub destination: NodeId,
    pub chosen_neighbor: NodeId,
    pub distance_m: f64,
    pub pt_dbm: f64,
    /// (neighbour, distance) of every candidate, arrival order.
    pub candidates: Vec<(NodeId, f64)>,
}

/// In-memory trace buffers, already formatted as CSV bodies.
#[derive(Clone, Debug, Default)]
pub struct Traces {
    pub mobility: String,
    pub energy: String,
    pub routing: String,
    pub ear: String,
    pub ear_decisions: Vec<EarDecision>,
}

impl Traces {
    pub(crate) fn mobility_row(&mut self, time: f64, node: NodeId, x: f64, y: f64) {
        let _ = writeln!(self.mobility, "{time},{node},{x},{y}");
    }

    pub(crate) fn energy_row(&mut self, time: f64, node: NodeId, remaining: f64, state: RadioState) {
        let _ = writeln!(self.energy, "{time},{node},{remaining},{}", state.as_str());
    }

    pub(crate) fn routing_row(&mut self, time: f64, node: NodeId, event: RoutingEvent, detail: std::fmt::Arguments<'_>) {
        let _ = writeln!(self.routing, "{time},{node},{},{detail}", event.as_str());
    }

    pub(crate) fn ear_row(&mut self, d: EarDecision) {
        let candidates = d
            .candidates
            .iter()
            .map(|(n, dist)| format!("{n}:{dist}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            self.ear,
            "{},{},{},{},{},{},{candidates}",
            d.time, d.node, d.destination, d.chosen_neighbor, d.distance_m, d.pt_dbm
        );
        self.ear_decisions.push(d);
    }

    pub fn mobility_csv(&self) -> String {
        format!("time,node,x,y\n{}", self.mobility)
    }

    pub fn energy_csv(&self) -> String {
        format!("time,node,remaining_j,state\n{}", self.energy)
    }

    pub fn routing_csv(&self) -> String {
        format!("time,node,event,detail\n{}", self.routing)
    }

    pub fn ear_csv(&self) -> String {
        format!("time,node,destination,chosen_neighbor,distance_m,pt_dbm,candidates\n{}", self.ear)
    }
}

pub fn deaths_csv(report: &MetricsReport) -> String {
    let mut out = String::from("node,death_time_s\n");
    for (node, t) in &report.death_times {
        let _ = writeln!(out, "{node},{t}");
    }
    out
}

pub fn summary_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialization is infallible");
    s.push('\n');
    s
}

/// Writes `summary.json`, `deaths.csv` and, when traces were recorded,
/// `mobility.csv`, `energy.csv`, `routing.csv` and `ear.csv` into `dir`.
pub fn write_run_dir(dir: &Path, report: &MetricsReport, traces: Option<&Traces>) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), summary_json(report))?;
    fs::write(dir.join("deaths.csv"), deaths_csv(report))?;
    if let Some(t) = traces {
        fs::write(dir.join("mobility.csv"), t.mobility_csv())?;
        fs::write(dir.join("energy.csv"), t.energy_csv())?;
        fs::write(dir.join("routing.csv"), t.routing_csv())?;
        fs::write(dir.join("ear.csv"), t.ear_csv())?;
    }
    Ok(())
}
