use std::collections::{BTreeSet, VecDeque};

use earsim_core::engine::Simulation;
use earsim_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RANGE: f64 = 250.0;

fn random_connected(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<Point> {
    loop {
        let pts: Vec<Point> = (0..n)
            .map(|_| Point {
                x: rng.random_range(0.0..side),
                y: rng.random_range(0.0..side),
            })
            .collect();
        if bfs(&pts, 0).iter().all(Option::is_some) {
            return pts;
        }
    }
}

/// Unit-disk hop distances from `src`.
fn bfs(pts: &[Point], src: usize) -> Vec<Option<u32>> {
    bfs_avoiding(pts, src, None)
}

/// Like [`bfs`], but `barrier` is reachable without relaying anything.
fn bfs_avoiding(pts: &[Point], src: usize, barrier: Option<usize>) -> Vec<Option<u32>> {
    let mut dist = vec![None; pts.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..pts.len() {
            let (dx, dy) = (pts[u].x - pts[v].x, pts[u].y - pts[v].y);
            if dist[v].is_none() && (dx * dx + dy * dy).sqrt() <= RANGE {
                dist[v] = Some(dist[u].unwrap() + 1);
                if Some(v) != barrier {
                    q.push_back(v);
                }
            }
        }
    }
    dist
}

fn scenario(pts: &[Point], flows: &[(usize, usize)], protocol: Protocol) -> ScenarioConfig {
    let mut c = default_scenario();
    c.node_count = pts.len();
    c.static_positions = Some(pts.to_vec());
    c.flows = Some(
        flows
            .iter()
            .map(|&(s, d)| ConnectionSpec {
                source: NodeId::from(s),
                destination: NodeId::from(d),
                start_time: 0.0,
            })
            .collect(),
    );
    c.connection_count = flows.len();
    c.protocol = protocol;
    c.sim_duration = 2.0;
    c
}

fn distinct_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let s = rng.random_range(0..n);
    let d = (s + rng.random_range(1..n)) % n;
    (s, d)
}

#[test]
fn aodv_hop_counts_match_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut checked = 0;
    for _ in 0..50 {
        let pts = random_connected(&mut rng, 20, 600.0);
        let (s, d) = distinct_pair(&mut rng, 20);
        let mut sim = Simulation::new(scenario(&pts, &[(s, d)], Protocol::Aodv)).unwrap();
        sim.run_to_end();
        let origin_route = sim.router(NodeId::from(s)).valid_route(NodeId::from(d)).expect("route found");
        assert_eq!(Some(origin_route.hop_count), bfs(&pts, s)[d]);
        // The destination answers instead of relaying the flood, so reverse
        // routes towards the origin never pass through it.
        let towards_origin = bfs_avoiding(&pts, s, Some(d));
        let towards_dest = bfs(&pts, d);
        for n in 0..pts.len() {
            for e in sim.router(NodeId::from(n)).routes().filter(|e| e.valid) {
                let oracle = if e.destination.index() == s {
                    towards_origin[n]
                } else {
                    towards_dest[n]
                };
                assert!(e.destination.index() == s || e.destination.index() == d);
                assert_eq!(Some(e.hop_count), oracle, "node {n} -> {}", e.destination);
                checked += 1;
            }
        }
    }
    assert!(checked > 50);
}

/// Follows next hops from every node holding a valid route to `dest`.
fn has_cycle(sim: &Simulation, n: usize, dest: NodeId) -> bool {
    for start in 0..n {
        let mut seen = BTreeSet::new();
        let mut at = NodeId::from(start);
        while at != dest {
            if !seen.insert(at) {
                return true;
            }
            match sim.router(at).valid_route(dest) {
                Some(e) => at = e.next_hop,
                None => break,
            }
        }
    }
    false
}

#[test]
fn final_route_tables_are_loop_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for round in 0..100 {
        let pts = random_connected(&mut rng, 20, 600.0);
        let flows: Vec<_> = (0..3).map(|_| distinct_pair(&mut rng, 20)).collect();
        let protocol = if round % 2 == 0 { Protocol::Ear } else { Protocol::Aodv };
        let mut sim = Simulation::new(scenario(&pts, &flows, protocol)).unwrap();
        sim.run_to_end();
        for dest in 0..pts.len() {
            assert!(!has_cycle(&sim, pts.len(), NodeId::from(dest)), "round {round} dest {dest}");
        }
    }
}

#[test]
fn ear_origin_picks_nearest_replying_neighbour() {
    // Origin 0 with relays at 200, 120 and 240 m, all one hop from the
    // destination.
    let pts = [
        Point { x: 300.0, y: 500.0 },
        Point { x: 500.0, y: 500.0 },
        Point { x: 396.0, y: 572.0 },
        Point { x: 444.0, y: 692.0 },
        Point { x: 540.0, y: 620.0 },
    ];
    let cfg = scenario(&pts, &[(0, 4)], Protocol::Ear);
    let radio = cfg.radio_params();
    let mut sim = Simulation::new(cfg).unwrap();
    sim.run_to_end();
    let route = sim.router(NodeId(0)).valid_route(NodeId(4)).unwrap();
    assert_eq!(route.next_hop, NodeId(2));
    let expected = radio::required_tx_power(120.0, &radio).unwrap();
    assert!((route.link_tx_power.0 - expected.0).abs() < 1e-6);
}

