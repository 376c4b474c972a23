//! Random-waypoint motion, evaluated analytically at any query time.
//!
//! Each node owns an independent ChaCha stream derived from the scenario
//! seed, so a node's trajectory does not depend on how often (or in which
//! order) other nodes are queried.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MobilityError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

/// One travel leg followed by its pause.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub origin: Point,
    pub destination: Point,
    pub speed: f64,
    pub depart_time: f64,
    pub arrive_time: f64,
    pub pause_until: f64,
}

impl Waypoint {
    fn position_at(&self, t: f64) -> Point {
        if t >= self.arrive_time {
            return self.destination;
        }
        if t <= self.depart_time {
            return self.origin;
        }
        let f = (t - self.depart_time) / (self.arrive_time - self.depart_time);
        Point::new(
            self.origin.x + (self.destination.x - self.origin.x) * f,
            self.origin.y + (self.destination.y - self.origin.y) * f,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointParams {
    pub area_width: f64,
    pub area_height: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_time: f64,
}

#[derive(Clone, Debug)]
struct Track {
    rng: ChaCha8Rng,
    legs: Vec<Waypoint>,
}

#[derive(Clone, Debug)]
enum Model {
    Waypoint(WaypointParams),
    Stationary,
}

#[derive(Clone, Debug)]
pub struct Mobility {
    model: Model,
    tracks: Vec<Track>,
}

/// Stream 0 of the scenario seed is reserved for traffic generation.
fn node_stream(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64 + 1);
    rng
}

impl Mobility {
    /// Random waypoint with uniform initial positions. Every node starts
    /// paused at its initial position until `pause_time`.
    pub fn random_waypoint(node_count: usize, params: WaypointParams, seed: u64) -> Self {
        let tracks = (0..node_count)
            .map(|i| {
                let mut rng = node_stream(seed, i);
                let start = Point::new(
                    rng.random_range(0.0..=params.area_width),
                    rng.random_range(0.0..=params.area_height),
                );
                let first = Waypoint {
                    origin: start,
                    destination: start,
                    speed: 0.0,
                    depart_time: 0.0,
                    arrive_time: 0.0,
                    pause_until: params.pause_time,
                };
                Track { rng, legs: vec![first] }
            })
            .collect();
        Mobility {
            model: Model::Waypoint(params),
            tracks,
        }
    }

    /// Nodes that never move.
    pub fn stationary(positions: &[Point]) -> Self {
        let tracks = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| Track {
                rng: node_stream(0, i),
                legs: vec![Waypoint {
                    origin: p,
                    destination: p,
                    speed: 0.0,
                    depart_time: 0.0,
                    arrive_time: 0.0,
                    pause_until: f64::INFINITY,
                }],
            })
            .collect();
        Mobility {
            model: Model::Stationary,
            tracks,
        }
    }

    pub fn node_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn position_at(&mut self, node: NodeId, t: f64) -> Result<Point, MobilityError> {
        let params = match &self.model {
            Model::Waypoint(p) => Some(*p),
            Model::Stationary => None,
        };
        let track = self
            .tracks
            .get_mut(node.index())
            .ok_or(MobilityError::UnknownNode(node))?;
        if let Some(params) = params {
            extend_until(track, &params, t);
        }
        // Legs are contiguous: leg k covers [depart_k, depart_{k+1}).
        let idx = track.legs.partition_point(|leg| leg.depart_time <= t);
        let leg = &track.legs[idx.saturating_sub(1)];
        Ok(leg.position_at(t))
    }

    /// Legs generated so far for `node` (at least those covering every
    /// time already queried).
    pub fn legs(&self, node: NodeId) -> Result<&[Waypoint], MobilityError> {
        self.tracks
            .get(node.index())
            .map(|t| t.legs.as_slice())
            .ok_or(MobilityError::UnknownNode(node))
    }

    /// Generates legs until the trajectory covers time `t`.
    pub fn extend_to(&mut self, t: f64) {
        if let Model::Waypoint(params) = self.model {
            for track in &mut self.tracks {
                extend_until(track, &params, t);
            }
        }
    }
}

fn extend_until(track: &mut Track, params: &WaypointParams, t: f64) {
    loop {
        let last = *track.legs.last().expect("tracks always hold a leg");
        if last.pause_until > t {
            return;
        }
        let destination = Point::new(
            track.rng.random_range(0.0..=params.area_width),
            track.rng.random_range(0.0..=params.area_height),
        );
        let speed = track.rng.random_range(params.speed_min..=params.speed_max);
        let depart_time = last.pause_until;
        let arrive_time = depart_time + distance(last.destination, destination) / speed;
        track.legs.push(Waypoint {
            origin: last.destination,
            destination,
            speed,
            depart_time,
            arrive_time,
            pause_until: arrive_time + params.pause_time,
        });
    }
}
