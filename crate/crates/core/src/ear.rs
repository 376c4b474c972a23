//! Energy-aware extension of AODV.
//!
//! Instead of taking the first route reply, a node opens a reply collector
//! for `t_wait` seconds. When the window closes it keeps the reply whose
//! delivering neighbour is nearest (using the coordinates carried in the
//! reply), records that neighbour's position in the route entry and prices
//! the link with the Friis equation. At forwarding time the price is
//! refreshed from the neighbour's live position.

use crate::mobility::{distance, Point};
use crate::radio::{required_tx_power, Dbm, RadioError, RadioParams};
use crate::routing::{RouteEntry, RrepMsg};
use crate::NodeId;

/// Links shorter than this are priced as if they were this long; Friis is
/// meaningless in the near field and undefined at zero.
pub const MIN_PRICED_DISTANCE: f64 = 1.0;

/// One route reply waiting in a collector.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub rrep: RrepMsg,
    /// Neighbour that delivered the reply (the would-be next hop).
    pub neighbor: NodeId,
    /// Neighbour position as advertised in the reply.
    pub neighbor_pos: Point,
    pub arrival: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LateRrep;

#[derive(Clone, Debug, PartialEq)]
pub struct RrepCollector {
    pub destination: NodeId,
    pub window_start: f64,
    pub deadline: f64,
    pub candidates: Vec<Candidate>,
    pub late: u64,
}

/// Outcome of closing a collector.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub entry: RouteEntry,
    pub candidate: Candidate,
    pub distance: f64,
    /// Every candidate's (neighbour, distance), in arrival order.
    pub considered: Vec<(NodeId, f64)>,
}

impl RrepCollector {
    pub fn open(destination: NodeId, window_start: f64, t_wait: f64) -> Self {
        RrepCollector {
            destination,
            window_start,
            deadline: window_start + t_wait,
            candidates: Vec::new(),
            late: 0,
        }
    }

    pub fn collect_rrep(&mut self, candidate: Candidate) -> Result<(), LateRrep> {
        if candidate.arrival > self.deadline {
            self.late += 1;
            return Err(LateRrep);
        }
        self.candidates.push(candidate);
        Ok(())
    }

    /// Picks the candidate whose delivering neighbour is nearest to
    /// `self_pos`; ties go to the earlier arrival, then the lower node id.
    pub fn select_next_hop(&self, self_pos: Point, radio: &RadioParams, margin: f64) -> Option<Selection> {
        let considered: Vec<(NodeId, f64)> = self
            .candidates
            .iter()
            .map(|c| (c.neighbor, distance(self_pos, c.neighbor_pos)))
            .collect();
        let (best, &(_, best_distance)) = self.candidates.iter().zip(&considered).min_by(|(a, (_, da)), (b, (_, db))| {
            da.total_cmp(db)
                .then(a.arrival.total_cmp(&b.arrival))
                .then(a.neighbor.cmp(&b.neighbor))
        })?;
        let entry = RouteEntry {
            destination: self.destination,
            next_hop: best.neighbor,
            next_hop_pos: Some(best.neighbor_pos),
            hop_count: best.rrep.hop_count + 1,
            dest_seq: best.rrep.dest_seq,
            link_tx_power: price_link(best_distance, radio, margin),
            valid: true,
        };
        Some(Selection {
            entry,
            candidate: best.clone(),
            distance: best_distance,
            considered,
        })
    }
}

/// Transmit power for a link of `distance` metres, inflated by `margin`.
pub fn assign_link_power(distance: f64, radio: &RadioParams, margin: f64) -> Result<Dbm, RadioError> {
    if distance <= 0.0 {
        return Err(RadioError::NonPositiveDistance(distance));
    }
    required_tx_power(distance * margin, radio)
}

/// [`assign_link_power`] with near-field distances clamped to
/// [`MIN_PRICED_DISTANCE`].
pub fn price_link(distance: f64, radio: &RadioParams, margin: f64) -> Dbm {
    assign_link_power(distance.max(MIN_PRICED_DISTANCE), radio, margin).expect("clamped distance is positive")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinkCheck {
    InRange { power: Dbm, distance: f64 },
    Broken { distance: f64 },
}

/// Re-prices `entry` from the next hop's live position. Distances beyond
/// `max_range` mean the link is gone.
pub fn refresh_link_power(
    entry: &mut RouteEntry,
    self_pos: Point,
    next_hop_pos: Point,
    radio: &RadioParams,
    margin: f64,
    max_range: f64,
) -> LinkCheck {
    let d = distance(self_pos, next_hop_pos);
    if d > max_range {
        return LinkCheck::Broken { distance: d };
    }
    entry.link_tx_power = price_link(d, radio, margin);
    LinkCheck::InRange {
        power: entry.link_tx_power,
        distance: d,
    }
}
