//! Per-node AODV state machine: route table, RREQ flooding with duplicate
//! suppression, RREP return along reverse routes, RERR invalidation and
//! destination sequence numbers.
//!
//! The router never touches the network directly. Every handler returns a
//! list of [`RoutingAction`]s that the engine turns into transmissions,
//! buffer flushes or EAR collector deposits.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ear::{self, Candidate};
use crate::mobility::{distance, Point};
use crate::radio::{Dbm, RadioParams};
use crate::scenario::{Protocol, ScenarioConfig};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RreqId {
    pub origin: NodeId,
    pub counter: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RreqMsg {
    pub id: RreqId,
    pub origin: NodeId,
    pub origin_seq: u32,
    pub destination: NodeId,
    /// Last destination sequence number known to the origin, 0 if none.
    pub dest_seq_known: u32,
    pub hop_count: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RrepMsg {
    /// Node that asked for the route; the reply travels towards it.
    pub origin: NodeId,
    pub destination: NodeId,
    pub dest_seq: u32,
    /// Hops from the node that sent this RREP to the destination.
    pub hop_count: u32,
    /// Position of the node that sent (or forwarded) this RREP.
    pub loc: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RerrMsg {
    pub unreachable: Vec<(NodeId, u32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControlMessage {
    Rreq(RreqMsg),
    Rrep(RrepMsg),
    Rerr(RerrMsg),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    /// Coordinates of the next hop as last advertised (EAR only).
    pub next_hop_pos: Option<Point>,
    pub hop_count: u32,
    pub dest_seq: u32,
    /// Transmit power used on the link to `next_hop`.
    pub link_tx_power: Dbm,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoutingAction {
    Broadcast(ControlMessage),
    Unicast { to: NodeId, msg: ControlMessage },
    /// A forward route to `destination` became usable.
    RouteInstalled { destination: NodeId },
    /// An RREP must go through an EAR reply collector instead of being
    /// installed right away.
    Collect { destination: NodeId, candidate: Candidate },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouterConfig {
    pub protocol: Protocol,
    pub reply_all: bool,
    /// How long after the first copy the destination keeps answering
    /// further copies of the same RREQ (only with `reply_all`).
    pub reply_window: f64,
    pub intermediate_collect: bool,
    pub radio: RadioParams,
    pub power_margin: f64,
    pub common_power: Dbm,
}

impl RouterConfig {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        RouterConfig {
            protocol: cfg.protocol,
            reply_all: cfg.reply_all_effective(),
            reply_window: cfg.t_wait,
            intermediate_collect: cfg.intermediate_collect,
            radio: cfg.radio_params(),
            power_margin: cfg.power_margin,
            common_power: cfg.common_power_dbm(),
        }
    }

    fn is_ear(&self) -> bool {
        self.protocol == Protocol::Ear
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoutingCounters {
    pub duplicate_rreqs: u64,
    pub rreps_without_reverse_route: u64,
}

/// Whether a route advertised with (`seq`, `hops`) replaces `existing`.
fn supersedes(existing: Option<&RouteEntry>, seq: u32, hops: u32) -> bool {
    match existing {
        None => true,
        Some(e) if !e.valid => seq >= e.dest_seq,
        Some(e) => seq > e.dest_seq || (seq == e.dest_seq && hops < e.hop_count),
    }
}

#[derive(Clone, Debug)]
pub struct Router {
    id: NodeId,
    cfg: RouterConfig,
    own_seq: u32,
    rreq_counter: u32,
    seen: HashSet<RreqId>,
    /// First-copy arrival time of every RREQ this node answered as
    /// destination.
    answered: HashMap<RreqId, f64>,
    table: BTreeMap<NodeId, RouteEntry>,
    pub counters: RoutingCounters,
}

impl Router {
    pub fn new(id: NodeId, cfg: RouterConfig) -> Self {
        Router {
            id,
            cfg,
            own_seq: 0,
            rreq_counter: 0,
            seen: HashSet::new(),
            answered: HashMap::new(),
            table: BTreeMap::new(),
            counters: RoutingCounters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn own_seq(&self) -> u32 {
        self.own_seq
    }

    pub fn entry(&self, destination: NodeId) -> Option<&RouteEntry> {
        self.table.get(&destination)
    }

    pub fn valid_route(&self, destination: NodeId) -> Option<&RouteEntry> {
        self.table.get(&destination).filter(|e| e.valid)
    }

    pub fn valid_route_mut(&mut self, destination: NodeId) -> Option<&mut RouteEntry> {
        self.table.get_mut(&destination).filter(|e| e.valid)
    }

    pub fn routes(&self) -> impl Iterator<Item = &RouteEntry> {
        self.table.values()
    }

    /// Starts a route discovery for `destination`. The caller must have
    /// checked that no valid route exists.
    pub fn originate_discovery(&mut self, destination: NodeId) -> RreqMsg {
        debug_assert!(self.valid_route(destination).is_none());
        self.own_seq += 1;
        self.rreq_counter += 1;
        let id = RreqId {
            origin: self.id,
            counter: self.rreq_counter,
        };
        self.seen.insert(id);
        RreqMsg {
            id,
            origin: self.id,
            origin_seq: self.own_seq,
            destination,
            dest_seq_known: self.table.get(&destination).map_or(0, |e| e.dest_seq),
            hop_count: 0,
        }
    }

    fn common_entry(&self, destination: NodeId, next_hop: NodeId, hop_count: u32, dest_seq: u32) -> RouteEntry {
        RouteEntry {
            destination,
            next_hop,
            next_hop_pos: None,
            hop_count,
            dest_seq,
            link_tx_power: self.cfg.common_power,
            valid: true,
        }
    }

    /// Forward route through `sender`, priced from its advertised position
    /// in EAR mode.
    fn forward_entry(&self, msg: &RrepMsg, sender: NodeId, self_pos: Point) -> RouteEntry {
        let mut entry = self.common_entry(msg.destination, sender, msg.hop_count + 1, msg.dest_seq);
        if self.cfg.is_ear() {
            entry.next_hop_pos = Some(msg.loc);
            entry.link_tx_power = ear::price_link(distance(self_pos, msg.loc), &self.cfg.radio, self.cfg.power_margin);
        }
        entry
    }

    fn update_reverse_route(&mut self, msg: &RreqMsg, sender: NodeId) {
        let hops = msg.hop_count + 1;
        if supersedes(self.table.get(&msg.origin), msg.origin_seq, hops) {
            let entry = self.common_entry(msg.origin, sender, hops, msg.origin_seq);
            self.table.insert(msg.origin, entry);
        }
    }

    fn reply(&self, msg: &RreqMsg, dest_seq: u32, hop_count: u32, self_pos: Point, to: NodeId) -> RoutingAction {
        RoutingAction::Unicast {
            to,
            msg: ControlMessage::Rrep(RrepMsg {
                origin: msg.origin,
                destination: msg.destination,
                dest_seq,
                hop_count,
                loc: self_pos,
            }),
        }
    }

    pub fn handle_rreq(&mut self, msg: &RreqMsg, sender: NodeId, now: f64, self_pos: Point) -> Vec<RoutingAction> {
        if msg.origin == self.id {
            self.counters.duplicate_rreqs += 1;
            return Vec::new();
        }
        let is_destination = msg.destination == self.id;

        if !self.seen.insert(msg.id) {
            // Later copies only matter to a destination answering every copy.
            let within_window = self
                .answered
                .get(&msg.id)
                .is_some_and(|&first| now - first <= self.cfg.reply_window);
            if is_destination && self.cfg.reply_all && within_window {
                self.update_reverse_route(msg, sender);
                return vec![self.reply(msg, self.own_seq, 0, self_pos, sender)];
            }
            self.counters.duplicate_rreqs += 1;
            return Vec::new();
        }

        self.update_reverse_route(msg, sender);

        if is_destination {
            self.own_seq = (self.own_seq + 1).max(msg.dest_seq_known);
            self.answered.insert(msg.id, now);
            return vec![self.reply(msg, self.own_seq, 0, self_pos, sender)];
        }

        if !self.cfg.is_ear() {
            if let Some(e) = self.valid_route(msg.destination) {
                if e.dest_seq >= msg.dest_seq_known && e.next_hop != sender {
                    let (seq, hops) = (e.dest_seq, e.hop_count);
                    return vec![self.reply(msg, seq, hops, self_pos, sender)];
                }
            }
        }

        let mut fwd = msg.clone();
        fwd.hop_count += 1;
        vec![RoutingAction::Broadcast(ControlMessage::Rreq(fwd))]
    }

    pub fn handle_rrep(&mut self, msg: &RrepMsg, sender: NodeId, now: f64, self_pos: Point) -> Vec<RoutingAction> {
        let candidate = || Candidate {
            rrep: msg.clone(),
            neighbor: sender,
            neighbor_pos: msg.loc,
            arrival: now,
        };

        if msg.origin == self.id {
            if self.cfg.is_ear() {
                return vec![RoutingAction::Collect {
                    destination: msg.destination,
                    candidate: candidate(),
                }];
            }
            let hops = msg.hop_count + 1;
            if supersedes(self.table.get(&msg.destination), msg.dest_seq, hops) {
                let entry = self.common_entry(msg.destination, sender, hops, msg.dest_seq);
                self.table.insert(msg.destination, entry);
                return vec![RoutingAction::RouteInstalled {
                    destination: msg.destination,
                }];
            }
            return Vec::new();
        }

        if self.valid_route(msg.origin).is_none() {
            self.counters.rreps_without_reverse_route += 1;
            return Vec::new();
        }
        if self.cfg.is_ear() && self.cfg.intermediate_collect {
            return vec![RoutingAction::Collect {
                destination: msg.destination,
                candidate: candidate(),
            }];
        }

        let mut actions = Vec::new();
        let updated = supersedes(self.table.get(&msg.destination), msg.dest_seq, msg.hop_count + 1);
        if updated {
            let entry = self.forward_entry(msg, sender, self_pos);
            self.table.insert(msg.destination, entry);
            actions.push(RoutingAction::RouteInstalled {
                destination: msg.destination,
            });
        }
        // EAR relays every reply so the origin sees all candidate neighbours.
        if updated || self.cfg.is_ear() {
            actions.extend(self.forward_rrep(msg, self_pos));
        }
        actions
    }

    /// Relays `msg` one hop towards its origin, stamped with this node's
    /// position.
    pub fn forward_rrep(&self, msg: &RrepMsg, self_pos: Point) -> Option<RoutingAction> {
        let reverse = self.valid_route(msg.origin)?;
        Some(RoutingAction::Unicast {
            to: reverse.next_hop,
            msg: ControlMessage::Rrep(RrepMsg {
                hop_count: msg.hop_count + 1,
                loc: self_pos,
                ..msg.clone()
            }),
        })
    }

    /// Installs a route chosen by an EAR reply collector.
    pub fn install_route(&mut self, entry: RouteEntry) {
        self.table.insert(entry.destination, entry);
    }

    fn invalidate_where(&mut self, mut pred: impl FnMut(&RouteEntry) -> bool) -> Vec<(NodeId, u32)> {
        let mut out = Vec::new();
        for e in self.table.values_mut() {
            if e.valid && pred(e) {
                e.valid = false;
                e.dest_seq += 1;
                out.push((e.destination, e.dest_seq));
            }
        }
        out
    }

    /// Invalidates every route whose next hop is `broken_next_hop`. Returns
    /// the RERR to send, or `None` if nothing used that hop.
    pub fn handle_link_break(&mut self, broken_next_hop: NodeId) -> Option<RerrMsg> {
        let unreachable = self.invalidate_where(|e| e.next_hop == broken_next_hop);
        (!unreachable.is_empty()).then_some(RerrMsg { unreachable })
    }

    /// Invalidates listed routes that go through `sender`. Returns the RERR
    /// to propagate upstream, if any route was affected.
    pub fn handle_rerr(&mut self, msg: &RerrMsg, sender: NodeId) -> Option<RerrMsg> {
        let mut unreachable = Vec::new();
        for &(dest, seq) in &msg.unreachable {
            if let Some(e) = self.table.get_mut(&dest) {
                if e.valid && e.next_hop == sender {
                    e.valid = false;
                    e.dest_seq = e.dest_seq.max(seq);
                    unreachable.push((dest, e.dest_seq));
                }
            }
        }
        (!unreachable.is_empty()).then_some(RerrMsg { unreachable })
    }
}
