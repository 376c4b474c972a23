//! Deterministic discrete-event core.
//!
//! A run is single-threaded over one [`EventQueue`]. The radio is an
//! idealized unit disk: a transmission at power `pt` reaches every node
//! within `range_for_power(pt)` at the transmission start, with no
//! collisions, carrier sensing or retransmissions. Propagation delay is
//! zero, so a packet arrives one airtime after it was sent. Unicast data is
//! charged receive energy only at the addressed next hop unless
//! `charge_overhearers` is set.
//!
//! Link breaks are detected at forwarding time: the next hop is dead or
//! further away than `common_range`.

mod queue;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub use queue::{EventQueue, Scheduled};
pub use trace::{EarDecision, RoutingEvent, TraceOptions, Traces};

use crate::ear::{self, Candidate, LinkCheck, RrepCollector};
use crate::energy::{airtime, EnergyLedger, TrafficClass};
use crate::metrics::{self, ControlCounters, MetricsReport, PacketCounters};
use crate::mobility::{distance, Mobility, Point};
use crate::radio::{range_for_power, Dbm, Watts};
use crate::routing::{ControlMessage, RerrMsg, Router, RouterConfig, RoutingAction};
use crate::scenario::{connections_for, ConfigError, ConnectionSpec, Protocol, ScenarioConfig, WindowAnchor};
use crate::NodeId;

/// Relative slack on the broadcast reception radius, which is recomputed
/// from a power level and can land an ulp short of the nominal range.
const RANGE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataPacket {
    pub flow: usize,
    pub seq: u64,
    pub hops: u32,
}

#[derive(Clone, Debug)]
enum Payload {
    Control(ControlMessage),
    Data(DataPacket),
}

#[derive(Clone, Debug)]
enum Event {
    Delivery { to: NodeId, from: NodeId, payload: Payload },
    Overhear { node: NodeId },
    CbrEmit { flow: usize },
    CollectorDeadline { node: NodeId, key: (NodeId, NodeId), generation: u64 },
    DiscoveryRetry { node: NodeId, destination: NodeId, generation: u64, attempt: u32 },
    TraceSample,
    SimEnd,
}

#[derive(Clone, Copy, Debug)]
enum Target {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Debug)]
struct OpenCollector {
    collector: RrepCollector,
    generation: u64,
}

#[derive(Debug)]
struct Discovery {
    attempts: u32,
    generation: u64,
    timer_pending: bool,
}

#[derive(Debug)]
struct Node {
    ledger: EnergyLedger,
    router: Router,
    /// Keyed by (route origin, destination).
    collectors: BTreeMap<(NodeId, NodeId), OpenCollector>,
    buffers: BTreeMap<NodeId, VecDeque<DataPacket>>,
    discoveries: BTreeMap<NodeId, Discovery>,
    /// Destinations of flows this node sources.
    sourced: BTreeSet<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowStats {
    pub spec: ConnectionSpec,
    pub counters: PacketCounters,
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub flows: Vec<FlowStats>,
    pub traces: Option<Traces>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    router_cfg: RouterConfig,
    common_pt: Dbm,
    mobility: Mobility,
    nodes: Vec<Node>,
    flows: Vec<FlowStats>,
    queue: EventQueue<Event>,
    now: f64,
    finished: bool,
    next_generation: u64,
    control: ControlCounters,
    trace_opts: Option<TraceOptions>,
    traces: Option<Traces>,
}

/// Runs `cfg` to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    let mut sim = Simulation::new(cfg.clone())?;
    sim.run_to_end();
    Ok(sim.into_output())
}

/// Runs `cfg` to completion while recording traces.
pub fn run_traced(cfg: &ScenarioConfig, opts: TraceOptions) -> Result<RunOutput, ConfigError> {
    let mut sim = Simulation::with_traces(cfg.clone(), opts)?;
    sim.run_to_end();
    Ok(sim.into_output())
}

macro_rules! route_trace {
    ($sim:expr, $node:expr, $event:expr, $($arg:tt)*) => {
        if let Some(t) = $sim.traces.as_mut() {
            t.routing_row($sim.now, $node, $event, format_args!($($arg)*));
        }
    };
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        Self::build(cfg, None)
    }

    pub fn with_traces(cfg: ScenarioConfig, opts: TraceOptions) -> Result<Self, ConfigError> {
        Self::build(cfg, Some(opts))
    }

    fn build(cfg: ScenarioConfig, trace_opts: Option<TraceOptions>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let router_cfg = RouterConfig::from_scenario(&cfg);
        let mobility = match &cfg.static_positions {
            Some(positions) => Mobility::stationary(positions),
            None => Mobility::random_waypoint(cfg.node_count, cfg.waypoint_params(), cfg.rng_seed),
        };
        let mut nodes: Vec<Node> = (0..cfg.node_count)
            .map(|i| Node {
                ledger: EnergyLedger::new(cfg.initial_energy),
                router: Router::new(NodeId::from(i), router_cfg),
                collectors: BTreeMap::new(),
                buffers: BTreeMap::new(),
                discoveries: BTreeMap::new(),
                sourced: BTreeSet::new(),
            })
            .collect();
        let flows: Vec<FlowStats> = connections_for(&cfg)
            .into_iter()
            .map(|spec| FlowStats {
                spec,
                counters: PacketCounters::default(),
            })
            .collect();
        for f in &flows {
            nodes[f.spec.source.index()].sourced.insert(f.spec.destination);
        }

        let mut queue = EventQueue::default();
        queue.schedule(cfg.sim_duration, Event::SimEnd);
        for (i, f) in flows.iter().enumerate() {
            if f.spec.start_time < cfg.sim_duration {
                queue.schedule(f.spec.start_time, Event::CbrEmit { flow: i });
            }
        }
        if trace_opts.is_some() {
            queue.schedule(0.0, Event::TraceSample);
        }

        Ok(Simulation {
            common_pt: router_cfg.common_power,
            router_cfg,
            mobility,
            nodes,
            flows,
            queue,
            now: 0.0,
            finished: false,
            next_generation: 0,
            control: ControlCounters::default(),
            traces: trace_opts.map(|_| Traces::default()),
            trace_opts,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn router(&self, node: NodeId) -> &Router {
        &self.nodes[node.index()].router
    }

    pub fn ledger(&self, node: NodeId) -> &EnergyLedger {
        &self.nodes[node.index()].ledger
    }

    pub fn flows(&self) -> &[FlowStats] {
        &self.flows
    }

    pub fn control_counters(&self) -> ControlCounters {
        self.control
    }

    pub fn traces(&self) -> Option<&Traces> {
        self.traces.as_ref()
    }

    pub fn position(&mut self, node: NodeId) -> Point {
        self.pos(node)
    }

    /// Processes events up to and including `t` (or the end of the run).
    pub fn run_until(&mut self, t: f64) {
        while !self.finished {
            match self.queue.iter().map(|s| s.time).min_by(f64::total_cmp) {
                Some(next) if next <= t => {}
                _ => break,
            }
            self.step();
        }
        if !self.finished {
            self.now = self.now.max(t.min(self.cfg.sim_duration));
        }
    }

    pub fn run_to_end(&mut self) {
        while !self.finished {
            self.step();
        }
    }

    fn step(&mut self) {
        let Some(ev) = self.queue.pop() else {
            self.finish();
            return;
        };
        debug_assert!(ev.time >= self.now, "causality violated");
        self.now = ev.time;
        match ev.event {
            Event::SimEnd => self.finish(),
            Event::Delivery { to, from, payload } => self.on_delivery(to, from, payload),
            Event::Overhear { node } => self.on_overhear(node),
            Event::CbrEmit { flow } => self.on_cbr_emit(flow),
            Event::CollectorDeadline { node, key, generation } => self.on_collector_deadline(node, key, generation),
            Event::DiscoveryRetry {
                node,
                destination,
                generation,
                attempt,
            } => self.on_discovery_retry(node, destination, generation, attempt),
            Event::TraceSample => self.on_trace_sample(),
        }
    }

    pub fn into_output(mut self) -> RunOutput {
        if !self.finished {
            self.run_to_end();
        }
        RunOutput {
            report: self.report(),
            flows: self.flows,
            traces: self.traces,
        }
    }

    fn pos(&mut self, node: NodeId) -> Point {
        self.mobility
            .position_at(node, self.now)
            .expect("engine only queries known nodes")
    }

    fn next_generation(&mut self) -> u64 {
        self.next_generation += 1;
        self.next_generation
    }

    fn background_power(&self) -> (Watts, Watts) {
        (Watts(self.cfg.idle_power), Watts(self.cfg.sleep_power))
    }

    /// Charges background draw up to now. Returns whether the node is alive.
    fn settle(&mut self, node: NodeId) -> bool {
        let (idle, sleep) = self.background_power();
        let ledger = &mut self.nodes[node.index()].ledger;
        if ledger.is_dead() {
            return false;
        }
        ledger
            .charge_elapsed(self.now, idle, sleep)
            .expect("engine time never goes backwards");
        if ledger.is_dead() {
            self.on_death(node);
            return false;
        }
        true
    }

    fn on_death(&mut self, node: NodeId) {
        let n = &mut self.nodes[node.index()];
        n.collectors.clear();
        n.discoveries.clear();
        let buffers = std::mem::take(&mut n.buffers);
        let death = n.ledger.death_time().unwrap_or(self.now);
        for pkt in buffers.into_values().flatten() {
            self.flows[pkt.flow].counters.dropped_dead_node += 1;
        }
        if let Some(t) = self.traces.as_mut() {
            t.energy_row(death, node, 0.0, crate::energy::RadioState::Dead);
        }
    }

    fn packet_shape(&self, payload: &Payload) -> (u32, TrafficClass) {
        match payload {
            Payload::Control(_) => (self.cfg.control_packet_size, TrafficClass::Control),
            Payload::Data(_) => (self.cfg.traffic_packet_size, TrafficClass::Data),
        }
    }

    /// Charges the sender and schedules the receptions. Returns `false`
    /// when the sender is dead and nothing was sent.
    fn transmit(&mut self, sender: NodeId, target: Target, pt: Dbm, payload: Payload) -> bool {
        if !self.settle(sender) {
            return false;
        }
        let (size, class) = self.packet_shape(&payload);
        let watts = Watts(self.cfg.tx_watts(pt).0 + self.cfg.tx_overhead_power);
        self.nodes[sender.index()]
            .ledger
            .charge_tx(self.now, size, watts, self.cfg.energy_model, self.cfg.bandwidth, class)
            .expect("sender was settled alive");
        let arrival = self.now + airtime(size, self.cfg.bandwidth);
        let range = range_for_power(pt, &self.router_cfg.radio) * (1.0 + RANGE_EPS);
        let sender_pos = self.pos(sender);

        match target {
            Target::Broadcast => {
                for i in 0..self.nodes.len() {
                    let to = NodeId::from(i);
                    if to == sender || self.nodes[i].ledger.is_dead() {
                        continue;
                    }
                    if distance(sender_pos, self.pos(to)) <= range {
                        self.queue.schedule(
                            arrival,
                            Event::Delivery {
                                to,
                                from: sender,
                                payload: payload.clone(),
                            },
                        );
                    }
                }
            }
            Target::Unicast(to) => {
                if self.cfg.charge_overhearers && class == TrafficClass::Data {
                    for i in 0..self.nodes.len() {
                        let node = NodeId::from(i);
                        if node == sender || node == to || self.nodes[i].ledger.is_dead() {
                            continue;
                        }
                        if distance(sender_pos, self.pos(node)) <= range {
                            self.queue.schedule(arrival, Event::Overhear { node });
                        }
                    }
                }
                self.queue.schedule(arrival, Event::Delivery { to, from: sender, payload });
            }
        }

        if self.nodes[sender.index()].ledger.is_dead() {
            self.on_death(sender);
        }
        true
    }

    fn receive_charge(&mut self, node: NodeId, size: u32, class: TrafficClass) -> bool {
        if !self.settle(node) {
            return false;
        }
        let ledger = &mut self.nodes[node.index()].ledger;
        ledger
            .charge_rx(
                self.now,
                size,
                Watts(self.cfg.rx_power),
                self.cfg.energy_model,
                self.cfg.bandwidth,
                class,
            )
            .expect("receiver was settled alive");
        if ledger.is_dead() {
            self.on_death(node);
            return false;
        }
        true
    }

    fn on_overhear(&mut self, node: NodeId) {
        self.receive_charge(node, self.cfg.traffic_packet_size, TrafficClass::Data);
    }

    fn on_delivery(&mut self, to: NodeId, from: NodeId, payload: Payload) {
        let (size, class) = self.packet_shape(&payload);
        if !self.receive_charge(to, size, class) {
            if let Payload::Data(p) = payload {
                self.flows[p.flow].counters.dropped_dead_node += 1;
            }
            return;
        }
        match payload {
            Payload::Control(ControlMessage::Rreq(m)) => {
                route_trace!(self, to, RoutingEvent::RreqRx, "origin={} dest={} id={}:{} hops={}", m.origin, m.destination, m.id.origin, m.id.counter, m.hop_count);
                let pos = self.pos(to);
                let actions = self.nodes[to.index()].router.handle_rreq(&m, from, self.now, pos);
                self.apply(to, actions);
            }
            Payload::Control(ControlMessage::Rrep(m)) => {
                route_trace!(self, to, RoutingEvent::RrepRx, "origin={} dest={} from={} hops={}", m.origin, m.destination, from, m.hop_count);
                let pos = self.pos(to);
                let actions = self.nodes[to.index()].router.handle_rrep(&m, from, self.now, pos);
                self.apply(to, actions);
            }
            Payload::Control(ControlMessage::Rerr(m)) => {
                if let Some(up) = self.nodes[to.index()].router.handle_rerr(&m, from) {
                    self.propagate_invalidation(to, up);
                }
            }
            Payload::Data(p) => {
                if self.flows[p.flow].spec.destination == to {
                    self.flows[p.flow].counters.delivered += 1;
                } else {
                    self.forward_data(to, p);
                }
            }
        }
    }

    fn apply(&mut self, node: NodeId, actions: Vec<RoutingAction>) {
        for action in actions {
            match action {
                RoutingAction::Broadcast(msg) => self.send_control(node, Target::Broadcast, msg),
                RoutingAction::Unicast { to, msg } => self.send_control(node, Target::Unicast(to), msg),
                RoutingAction::RouteInstalled { destination } => self.route_ready(node, destination),
                RoutingAction::Collect { destination, candidate } => self.collect(node, destination, candidate),
            }
        }
    }

    /// Next hop is alive and within `common_range`.
    fn link_up(&mut self, from: NodeId, to: NodeId) -> bool {
        if self.nodes[to.index()].ledger.is_dead() {
            return false;
        }
        let (a, b) = (self.pos(from), self.pos(to));
        distance(a, b) <= self.cfg.common_range
    }

    fn send_control(&mut self, node: NodeId, target: Target, msg: ControlMessage) {
        if let Target::Unicast(to) = target {
            if !self.link_up(node, to) {
                self.control.link_breaks += 1;
                self.link_break(node, to);
                return;
            }
        }
        if self.nodes[node.index()].ledger.is_dead() {
            return;
        }
        match &msg {
            ControlMessage::Rreq(m) => {
                self.control.rreq_tx += 1;
                route_trace!(self, node, RoutingEvent::RreqTx, "origin={} dest={} id={}:{} hops={}", m.origin, m.destination, m.id.origin, m.id.counter, m.hop_count);
            }
            ControlMessage::Rrep(m) => {
                self.control.rrep_tx += 1;
                route_trace!(self, node, RoutingEvent::RrepTx, "origin={} dest={} seq={} hops={}", m.origin, m.destination, m.dest_seq, m.hop_count);
            }
            ControlMessage::Rerr(m) => {
                self.control.rerr_tx += 1;
                route_trace!(self, node, RoutingEvent::RerrTx, "unreachable={}", m.unreachable.len());
            }
        }
        self.transmit(node, target, self.common_pt, Payload::Control(msg));
    }

    fn route_ready(&mut self, node: NodeId, destination: NodeId) {
        if let Some(e) = self.nodes[node.index()].router.valid_route(destination) {
            route_trace!(self, node, RoutingEvent::RouteInstall, "dest={} next_hop={} hops={} pt_dbm={}", destination, e.next_hop, e.hop_count, e.link_tx_power.0);
        }
        let n = &mut self.nodes[node.index()];
        n.discoveries.remove(&destination);
        if let Some(buffered) = n.buffers.remove(&destination) {
            for pkt in buffered {
                self.forward_data(node, pkt);
            }
        }
    }

    fn open_collector(&mut self, node: NodeId, key: (NodeId, NodeId)) {
        let generation = self.next_generation();
        let collector = RrepCollector::open(key.1, self.now, self.cfg.t_wait);
        let deadline = collector.deadline;
        self.nodes[node.index()]
            .collectors
            .insert(key, OpenCollector { collector, generation });
        self.queue.schedule(deadline, Event::CollectorDeadline { node, key, generation });
    }

    fn collect(&mut self, node: NodeId, destination: NodeId, candidate: Candidate) {
        let key = (candidate.rrep.origin, destination);
        let is_origin = key.0 == node;
        if !self.nodes[node.index()].collectors.contains_key(&key) {
            let wanted = !is_origin || self.nodes[node.index()].discoveries.contains_key(&destination);
            if !wanted {
                self.control.late_rreps += 1;
                return;
            }
            self.open_collector(node, key);
        }
        let open = self.nodes[node.index()]
            .collectors
            .get_mut(&key)
            .expect("collector opened above");
        // Late arrivals are tallied by the collector itself.
        let _ = open.collector.collect_rrep(candidate);
    }

    fn on_collector_deadline(&mut self, node: NodeId, key: (NodeId, NodeId), generation: u64) {
        if !self.settle(node) {
            return;
        }
        let n = &mut self.nodes[node.index()];
        match n.collectors.get(&key) {
            Some(open) if open.generation == generation => {}
            _ => return,
        }
        let open = n.collectors.remove(&key).expect("checked above");
        self.control.late_rreps += open.collector.late;
        let self_pos = self.pos(node);
        let selection = open
            .collector
            .select_next_hop(self_pos, &self.router_cfg.radio, self.cfg.power_margin);
        let (origin, destination) = key;

        let Some(sel) = selection else {
            // Empty window: fall through to the next discovery attempt.
            let n = &self.nodes[node.index()];
            if origin == node && n.discoveries.get(&destination).is_some_and(|d| !d.timer_pending) {
                self.advance_discovery(node, destination);
            }
            return;
        };

        if let Some(t) = self.traces.as_mut() {
            t.ear_row(EarDecision {
                time: self.now,
                node,
                destination,
                chosen_neighbor: sel.entry.next_hop,
                distance_m: sel.distance,
                pt_dbm: sel.entry.link_tx_power.0,
                candidates: sel.considered.clone(),
            });
        }
        let router = &mut self.nodes[node.index()].router;
        router.install_route(sel.entry);
        if origin != node {
            if let Some(fwd) = router.forward_rrep(&sel.candidate.rrep, self_pos) {
                self.apply(node, vec![fwd]);
            }
        }
        self.route_ready(node, destination);
    }

    fn start_discovery(&mut self, node: NodeId, destination: NodeId) {
        let n = &self.nodes[node.index()];
        if n.ledger.is_dead() || n.discoveries.contains_key(&destination) || n.router.valid_route(destination).is_some() {
            return;
        }
        let generation = self.next_generation();
        self.nodes[node.index()].discoveries.insert(
            destination,
            Discovery {
                attempts: 0,
                generation,
                timer_pending: false,
            },
        );
        self.send_rreq(node, destination);
    }

    fn send_rreq(&mut self, node: NodeId, destination: NodeId) {
        let n = &mut self.nodes[node.index()];
        let Some(d) = n.discoveries.get_mut(&destination) else {
            return;
        };
        d.attempts += 1;
        d.timer_pending = true;
        let (attempt, generation) = (d.attempts, d.generation);
        let rreq = n.router.originate_discovery(destination);
        let key = (node, destination);
        if self.cfg.protocol == Protocol::Ear
            && self.cfg.window_anchor == WindowAnchor::RreqSent
            && !n.collectors.contains_key(&key)
        {
            self.open_collector(node, key);
        }
        self.send_control(node, Target::Broadcast, ControlMessage::Rreq(rreq));
        let delay = self.cfg.rreq_backoff * 2f64.powi(attempt as i32 - 1);
        self.queue.schedule(
            self.now + delay,
            Event::DiscoveryRetry {
                node,
                destination,
                generation,
                attempt,
            },
        );
    }

    fn on_discovery_retry(&mut self, node: NodeId, destination: NodeId, generation: u64, attempt: u32) {
        if !self.settle(node) {
            return;
        }
        let n = &mut self.nodes[node.index()];
        let Some(d) = n.discoveries.get_mut(&destination) else {
            return;
        };
        if d.generation != generation || d.attempts != attempt {
            return;
        }
        d.timer_pending = false;
        if n.router.valid_route(destination).is_some() {
            n.discoveries.remove(&destination);
            return;
        }
        if n.collectors.contains_key(&(node, destination)) {
            // Replies are in; the collector deadline settles this round.
            return;
        }
        self.advance_discovery(node, destination);
    }

    /// Sends the next RREQ, or gives up once all retries are spent.
    fn advance_discovery(&mut self, node: NodeId, destination: NodeId) {
        let attempts = match self.nodes[node.index()].discoveries.get(&destination) {
            Some(d) => d.attempts,
            None => return,
        };
        if attempts <= self.cfg.rreq_retries {
            self.send_rreq(node, destination);
            return;
        }
        let n = &mut self.nodes[node.index()];
        n.discoveries.remove(&destination);
        self.control.discovery_failures += 1;
        if let Some(buffered) = n.buffers.remove(&destination) {
            for pkt in buffered {
                self.flows[pkt.flow].counters.dropped_no_route += 1;
            }
        }
    }

    fn buffer_packet(&mut self, node: NodeId, destination: NodeId, pkt: DataPacket) {
        let capacity = self.cfg.buffer_capacity;
        if capacity == 0 {
            self.flows[pkt.flow].counters.dropped_buffer_overflow += 1;
            return;
        }
        let buf = self.nodes[node.index()].buffers.entry(destination).or_default();
        if buf.len() >= capacity {
            let oldest = buf.pop_front().expect("full buffer is non-empty");
            self.flows[oldest.flow].counters.dropped_buffer_overflow += 1;
        }
        buf.push_back(pkt);
    }

    fn forward_data(&mut self, node: NodeId, mut pkt: DataPacket) {
        let spec = self.flows[pkt.flow].spec;
        if pkt.hops >= self.cfg.hop_limit {
            self.flows[pkt.flow].counters.dropped_hop_limit += 1;
            return;
        }
        if !self.settle(node) {
            self.flows[pkt.flow].counters.dropped_dead_node += 1;
            return;
        }
        let destination = spec.destination;
        let Some(next) = self.nodes[node.index()].router.valid_route(destination).map(|e| e.next_hop) else {
            if spec.source == node {
                self.buffer_packet(node, destination, pkt);
                self.start_discovery(node, destination);
            } else {
                self.flows[pkt.flow].counters.dropped_no_route += 1;
                let seq = self.nodes[node.index()].router.entry(destination).map_or(0, |e| e.dest_seq);
                self.send_control(
                    node,
                    Target::Broadcast,
                    ControlMessage::Rerr(RerrMsg {
                        unreachable: vec![(destination, seq)],
                    }),
                );
            }
            return;
        };

        let self_pos = self.pos(node);
        let next_pos = self.pos(next);
        let next_alive = !self.nodes[next.index()].ledger.is_dead();
        let pt = if !next_alive {
            None
        } else {
            match self.cfg.protocol {
                Protocol::Aodv => (distance(self_pos, next_pos) <= self.cfg.common_range).then_some(self.common_pt),
                Protocol::Ear => {
                    let entry = self.nodes[node.index()]
                        .router
                        .valid_route_mut(destination)
                        .expect("route looked up above");
                    match ear::refresh_link_power(
                        entry,
                        self_pos,
                        next_pos,
                        &self.router_cfg.radio,
                        self.cfg.power_margin,
                        self.cfg.common_range,
                    ) {
                        LinkCheck::InRange { power, .. } => Some(power),
                        LinkCheck::Broken { .. } => None,
                    }
                }
            }
        };
        let Some(pt) = pt else {
            self.flows[pkt.flow].counters.dropped_link_break += 1;
            self.control.link_breaks += 1;
            self.link_break(node, next);
            return;
        };
        pkt.hops += 1;
        self.control.data_tx += 1;
        self.transmit(node, Target::Unicast(next), pt, Payload::Data(pkt));
    }

    fn link_break(&mut self, node: NodeId, broken: NodeId) {
        if let Some(rerr) = self.nodes[node.index()].router.handle_link_break(broken) {
            self.propagate_invalidation(node, rerr);
        }
    }

    /// Traces the invalidated routes, sends the RERR and restarts discovery
    /// for any flow this node sources.
    fn propagate_invalidation(&mut self, node: NodeId, rerr: RerrMsg) {
        let restart: Vec<NodeId> = rerr
            .unreachable
            .iter()
            .map(|&(d, _)| d)
            .filter(|d| self.nodes[node.index()].sourced.contains(d))
            .collect();
        for &(d, seq) in &rerr.unreachable {
            route_trace!(self, node, RoutingEvent::RouteInvalidate, "dest={} seq={}", d, seq);
        }
        self.send_control(node, Target::Broadcast, ControlMessage::Rerr(rerr));
        for d in restart {
            self.start_discovery(node, d);
        }
    }

    fn on_cbr_emit(&mut self, flow: usize) {
        let spec = self.flows[flow].spec;
        if !self.settle(spec.source) {
            return;
        }
        let counters = &mut self.flows[flow].counters;
        let seq = counters.emitted;
        counters.emitted += 1;
        self.forward_data(spec.source, DataPacket { flow, seq, hops: 0 });
        let next = spec.start_time + (seq + 1) as f64 / self.cfg.traffic_rate;
        if next < self.cfg.sim_duration {
            self.queue.schedule(next, Event::CbrEmit { flow });
        }
    }

    fn sample_rows(&mut self, t: f64, settled: bool) {
        if self.traces.is_none() {
            return;
        }
        let (idle, sleep) = self.background_power();
        for i in 0..self.nodes.len() {
            let node = NodeId::from(i);
            let p = self.pos(node);
            let ledger = &self.nodes[i].ledger;
            let remaining = if settled {
                ledger.remaining()
            } else {
                ledger.remaining_at(t, idle, sleep)
            };
            let state = ledger.state();
            let traces = self.traces.as_mut().expect("checked above");
            traces.mobility_row(t, node, p.x, p.y);
            traces.energy_row(t, node, remaining, state);
        }
    }

    fn on_trace_sample(&mut self) {
        self.sample_rows(self.now, false);
        let interval = self.trace_opts.map_or(1.0, |o| o.sample_interval);
        let next = self.now + interval;
        if interval > 0.0 && next < self.cfg.sim_duration {
            self.queue.schedule(next, Event::TraceSample);
        }
    }

    fn finish(&mut self) {
        if self.finished {
            return;
        }
        self.now = self.cfg.sim_duration;
        for i in 0..self.nodes.len() {
            self.settle(NodeId::from(i));
        }
        for s in self.queue.iter() {
            if let Event::Delivery {
                payload: Payload::Data(p),
                ..
            } = &s.event
            {
                self.flows[p.flow].counters.in_flight_at_end += 1;
            }
        }
        for n in &self.nodes {
            for pkt in n.buffers.values().flatten() {
                self.flows[pkt.flow].counters.in_flight_at_end += 1;
            }
        }
        self.sample_rows(self.cfg.sim_duration, true);
        self.finished = true;
    }

    /// Metrics for the run so far (final once the run has finished).
    pub fn report(&self) -> MetricsReport {
        let ledgers = self.nodes.iter().map(|n| &n.ledger);
        let per_node: Vec<f64> = ledgers.clone().map(EnergyLedger::consumed).collect();
        let death_times: BTreeMap<u32, f64> = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.ledger.death_time().map(|t| (i as u32, t)))
            .collect();
        let deaths: Vec<f64> = death_times.values().copied().collect();
        let k = self.cfg.lifetime_k_effective();
        let lifetime = metrics::network_lifetime(&deaths, k, self.cfg.sim_duration);

        let mut packets = PacketCounters::default();
        for f in &self.flows {
            packets.add(&f.counters);
        }
        let mut control = self.control;
        for n in &self.nodes {
            control.duplicate_rreqs += n.router.counters.duplicate_rreqs;
            control.rreps_without_reverse_route += n.router.counters.rreps_without_reverse_route;
        }

        MetricsReport {
            protocol: self.cfg.protocol.as_str().to_owned(),
            energy_model: match self.cfg.energy_model {
                crate::EnergyModel::PerPacketEq => "PER_PACKET_EQ".to_owned(),
                crate::EnergyModel::PowerDuration => "POWER_DURATION".to_owned(),
            },
            rng_seed: self.cfg.rng_seed,
            node_count: self.cfg.node_count,
            connection_count: self.flows.len(),
            sim_duration: self.cfg.sim_duration,
            network_lifetime: lifetime.value(),
            lifetime_censored: lifetime.is_censored(),
            k_used: k,
            total_energy: metrics::total_energy(&per_node),
            energy_by_cause: metrics::energy_by_cause(ledgers.clone()),
            alive_nodes: metrics::alive_nodes(ledgers, self.cfg.alive_threshold),
            alive_fraction_threshold: self.cfg.alive_threshold,
            death_times,
            per_node_energy: per_node.iter().enumerate().map(|(i, &e)| (i as u32, e)).collect(),
            packets_emitted: packets.emitted,
            packets_delivered: packets.delivered,
            packets_dropped: packets.dropped(),
            packets,
            control,
        }
    }
}
