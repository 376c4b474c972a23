use earsim_core::energy::airtime;
use earsim_core::engine::{run_traced, Simulation, TraceOptions};
use earsim_core::radio::{dbm_to_watts, required_tx_power};
use earsim_core::scenario::{CommonPowerSource, ConfigError};
use earsim_core::*;

fn static_cfg(points: &[(f64, f64)], flows: &[(u32, u32, f64)], protocol: Protocol) -> ScenarioConfig {
    let mut c = default_scenario();
    c.node_count = points.len();
    c.static_positions = Some(points.iter().map(|&(x, y)| Point { x, y }).collect());
    c.flows = Some(
        flows
            .iter()
            .map(|&(s, d, t)| ConnectionSpec {
                source: NodeId(s),
                destination: NodeId(d),
                start_time: t,
            })
            .collect(),
    );
    c.connection_count = flows.len();
    c.protocol = protocol;
    c
}

fn rows<'a>(csv: &'a str, event: &str) -> Vec<Vec<&'a str>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| r[2] == event)
        .collect()
}

#[test]
fn lone_idle_node_spends_exactly_idle_energy() {
    let mut c = default_scenario();
    c.node_count = 1;
    c.connection_count = 0;
    let out = run(&c).unwrap();
    let r = &out.report;
    assert_eq!(r.control.rreq_tx + r.control.rrep_tx + r.control.rerr_tx + r.control.data_tx, 0);
    assert_eq!(r.packets_emitted, 0);
    // 0.0005 W for 200 s.
    assert!((r.total_energy - 0.1).abs() < 1e-12, "{}", r.total_energy);
    assert!((r.energy_by_cause["idle"] - 0.1).abs() < 1e-12);
}

#[test]
fn two_node_ear_prices_every_packet_by_friis() {
    let mut c = static_cfg(&[(0.0, 0.0), (100.0, 0.0)], &[(0, 1, 0.0)], Protocol::Ear);
    c.common_power_source = CommonPowerSource::Friis;
    let out = run_traced(&c, TraceOptions::default()).unwrap();
    let r = &out.report;
    assert_eq!(r.packets_emitted, 800);
    assert_eq!(r.packets_delivered, 800);

    let radio = c.radio_params();
    let expected_dbm = required_tx_power(100.0, &radio).unwrap();
    let traces = out.traces.unwrap();
    assert!(!traces.ear_decisions.is_empty());
    for d in &traces.ear_decisions {
        assert!((d.pt_dbm - expected_dbm.0).abs() < 1e-9);
    }
    // Every data Tx costs P_t(100) in watts for one 512 B airtime.
    let per_packet = dbm_to_watts(expected_dbm).0 * airtime(512, 2e6);
    let expected = per_packet * 800.0;
    assert!((r.energy_by_cause["tx_data"] - expected).abs() <= 1e-9 * expected);
}

#[test]
fn broadcast_reaches_the_inclusive_disk() {
    // Node 0 floods towards node 3, which is 1 m beyond the range.
    let pts = [(300.0, 300.0), (400.0, 300.0), (300.0, 550.0), (49.0, 300.0)];
    let c = static_cfg(&pts, &[(0, 3, 1.0)], Protocol::Aodv);
    let out = run_traced(&c, TraceOptions::default()).unwrap();
    let routing = out.traces.unwrap().routing_csv();
    let first_arrival = 1.0 + airtime(64, 2e6);
    let receivers: Vec<&str> = rows(&routing, "RREQ_RX")
        .into_iter()
        .filter(|r| r[0].parse::<f64>().unwrap() == first_arrival)
        .map(|r| r[1])
        .collect();
    assert_eq!(receivers, ["1", "2"]);
}

#[test]
fn unicast_data_arrives_one_airtime_later() {
    let c = static_cfg(&[(0.0, 0.0), (100.0, 0.0)], &[(0, 1, 1.0)], Protocol::Aodv);
    let mut sim = Simulation::new(c).unwrap();
    let control = airtime(64, 2e6);
    // RREQ out, RREP back, then the buffered packet goes out.
    let sent = 1.0 + control + control;
    let arrival = sent + airtime(512, 2e6);
    assert_eq!(airtime(512, 2e6), 2.048e-3);
    sim.run_until(sent);
    assert_eq!(sim.flows()[0].counters.emitted, 1);
    assert_eq!(sim.flows()[0].counters.delivered, 0);
    sim.run_until(arrival - 1e-9);
    assert_eq!(sim.flows()[0].counters.delivered, 0);
    sim.run_until(arrival);
    assert_eq!(sim.flows()[0].counters.delivered, 1);
}

#[test]
fn cbr_emits_800_packets_per_flow() {
    let c = static_cfg(&[(0.0, 0.0), (200.0, 0.0), (400.0, 0.0)], &[(0, 2, 0.0), (2, 1, 0.0)], Protocol::Ear);
    let out = run(&c).unwrap();
    for f in &out.flows {
        assert_eq!(f.counters.emitted, 800);
        assert!(f.counters.is_conserved());
    }
}

#[test]
fn isolated_destination_exhausts_discovery_but_keeps_emitting() {
    let c = static_cfg(&[(0.0, 0.0), (900.0, 900.0)], &[(0, 1, 0.0)], Protocol::Aodv);
    let mut sim = Simulation::with_traces(c, TraceOptions::default()).unwrap();
    // Attempts at 0, 0.5 and 1.5 s; the last one times out at 3.5 s.
    sim.run_until(3.4);
    let routing = sim.traces().unwrap().routing_csv();
    let times: Vec<f64> = rows(&routing, "RREQ_TX").iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(times, [0.0, 0.5, 1.5]);
    assert_eq!(sim.flows()[0].counters.dropped_no_route, 0);
    sim.run_until(3.5);
    // Packets emitted at 0, 0.25, ..., 3.5 minus the one that arrived just now.
    assert_eq!(sim.control_counters().discovery_failures, 1);
    assert!(sim.flows()[0].counters.dropped_no_route >= 14);

    sim.run_to_end();
    let f = sim.flows()[0].counters;
    assert_eq!(f.emitted, 800);
    assert_eq!(f.delivered, 0);
    assert!(f.is_conserved(), "{f:?}");
}

#[test]
fn dead_source_stops_emitting() {
    let mut c = static_cfg(&[(0.0, 0.0), (100.0, 0.0)], &[(0, 1, 0.0)], Protocol::Aodv);
    c.energy_model = EnergyModel::PerPacketEq;
    // Enough for a handful of packets only.
    c.initial_energy = 0.05;
    let out = run(&c).unwrap();
    let r = &out.report;
    assert!(r.death_times.contains_key(&0));
    assert!(r.packets_emitted < 800);
    let death = r.death_times[&0];
    // The last emission happened no later than the death.
    assert!((r.packets_emitted - 1) as f64 / 4.0 <= death);
    assert!(out.flows[0].counters.is_conserved());
}

#[test]
fn mobile_source_rediscovers_after_rerr() {
    let mut c = default_scenario();
    c.speed_min = 20.0;
    c.speed_max = 20.0;
    c.rng_seed = 3;
    let out = run_traced(&c, TraceOptions::default()).unwrap();
    let routing = out.traces.unwrap().routing_csv();
    let invalidations = rows(&routing, "ROUTE_INVALIDATE");
    assert!(!invalidations.is_empty());
    assert!(out.report.control.rerr_tx > 0);
    let rreqs = rows(&routing, "RREQ_TX");
    // Some invalidation at a source is immediately followed by its own fresh flood.
    let restarted = invalidations.iter().any(|inv| {
        rreqs
            .iter()
            .any(|rq| rq[0] == inv[0] && rq[1] == inv[1] && rq[3].starts_with(&format!("origin={} ", inv[1])))
    });
    assert!(restarted);
}

#[test]
fn identical_configs_give_identical_traces() {
    let mut c = default_scenario();
    c.node_count = 20;
    c.connection_count = 10;
    c.sim_duration = 50.0;
    c.rng_seed = 11;
    let a = run_traced(&c, TraceOptions::default()).unwrap();
    let b = run_traced(&c, TraceOptions::default()).unwrap();
    let (ta, tb) = (a.traces.unwrap(), b.traces.unwrap());
    assert_eq!(ta.mobility_csv(), tb.mobility_csv());
    assert_eq!(ta.energy_csv(), tb.energy_csv());
    assert_eq!(ta.routing_csv(), tb.routing_csv());
    assert_eq!(ta.ear_csv(), tb.ear_csv());
    assert_eq!(a.report, b.report);
}

#[test]
fn energy_closes_and_packets_are_conserved() {
    for (seed, protocol, model) in [
        (1, Protocol::Ear, EnergyModel::PowerDuration),
        (2, Protocol::Aodv, EnergyModel::PowerDuration),
        (3, Protocol::Ear, EnergyModel::PerPacketEq),
    ] {
        let mut c = default_scenario();
        c.node_count = 25;
        c.connection_count = 13;
        c.sim_duration = 60.0;
        c.rng_seed = seed;
        c.protocol = protocol;
        c.energy_model = model;
        c.initial_energy = 2.0;
        let mut sim = Simulation::new(c.clone()).unwrap();
        sim.run_to_end();
        let (spent, totals): (f64, f64) = (0..c.node_count)
            .map(|i| {
                let l = sim.ledger(NodeId(i as u32));
                (l.initial() - l.remaining(), l.totals_sum())
            })
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        assert!((spent - totals).abs() <= 1e-9 * spent.max(1e-300), "{spent} vs {totals}");
        for f in sim.flows() {
            assert!(f.counters.is_conserved(), "{:?}", f.counters);
        }
        let r = sim.report();
        assert!((r.total_energy - r.per_node_energy.values().sum::<f64>()).abs() < 1e-12);
        assert!(r.alive_nodes <= r.node_count);
        assert_eq!(r.lifetime_censored, r.death_times.len() < r.k_used);
    }
}

#[test]
fn invalid_config_is_rejected() {
    let mut c = default_scenario();
    c.speed_min = 20.0;
    assert!(matches!(Simulation::new(c), Err(ConfigError::Invalid { .. })));
}
