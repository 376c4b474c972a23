//! Reduction of a finished run to network lifetime, total energy and
//! alive-node count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyCause, EnergyLedger};

/// Time at which the k-th node died, or a lower bound when the run ended
/// first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lifetime {
    At(f64),
    Censored(f64),
}

impl Lifetime {
    /// The k-th death time, or the censoring time.
    pub fn value(self) -> f64 {
        match self {
            Lifetime::At(t) | Lifetime::Censored(t) => t,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, Lifetime::Censored(_))
    }
}

/// k-th smallest death time; censored at `sim_duration` when fewer than
/// `k` nodes died.
pub fn network_lifetime(death_times: &[f64], k: usize, sim_duration: f64) -> Lifetime {
    assert!(k >= 1, "lifetime needs k ≥ 1");
    if death_times.len() < k {
        return Lifetime::Censored(sim_duration);
    }
    let mut sorted = death_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    Lifetime::At(sorted[k - 1])
}

pub fn total_energy(per_node_energy: &[f64]) -> f64 {
    per_node_energy.iter().sum()
}

/// Nodes holding strictly more than `threshold` of their initial energy.
pub fn alive_nodes<'a>(ledgers: impl IntoIterator<Item = &'a EnergyLedger>, threshold: f64) -> usize {
    ledgers
        .into_iter()
        .filter(|l| l.is_alive_at_threshold(threshold))
        .count()
}

/// Energy summed over nodes per cause.
pub fn energy_by_cause<'a>(ledgers: impl IntoIterator<Item = &'a EnergyLedger>) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = EnergyCause::ALL.iter().map(|c| (c.as_str().to_owned(), 0.0)).collect();
    for l in ledgers {
        for c in EnergyCause::ALL {
            *out.get_mut(c.as_str()).expect("all causes present") += l.total(c);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketCounters {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped_no_route: u64,
    pub dropped_link_break: u64,
    pub dropped_dead_node: u64,
    pub dropped_buffer_overflow: u64,
    pub dropped_hop_limit: u64,
    pub in_flight_at_end: u64,
}

impl PacketCounters {
    pub fn dropped(&self) -> u64 {
        self.dropped_no_route
            + self.dropped_link_break
            + self.dropped_dead_node
            + self.dropped_buffer_overflow
            + self.dropped_hop_limit
    }

    /// emitted = delivered + dropped + in flight.
    pub fn is_conserved(&self) -> bool {
        self.emitted == self.delivered + self.dropped() + self.in_flight_at_end
    }

    pub fn add(&mut self, o: &PacketCounters) {
        self.emitted += o.emitted;
        self.delivered += o.delivered;
        self.dropped_no_route += o.dropped_no_route;
        self.dropped_link_break += o.dropped_link_break;
        self.dropped_dead_node += o.dropped_dead_node;
        self.dropped_buffer_overflow += o.dropped_buffer_overflow;
        self.dropped_hop_limit += o.dropped_hop_limit;
        self.in_flight_at_end += o.in_flight_at_end;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCounters {
    pub rreq_tx: u64,
    pub rrep_tx: u64,
    pub rerr_tx: u64,
    pub data_tx: u64,
    pub late_rreps: u64,
    pub duplicate_rreqs: u64,
    pub rreps_without_reverse_route: u64,
    pub discovery_failures: u64,
    pub link_breaks: u64,
}

/// Everything `summary.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub energy_model: String,
    pub rng_seed: u64,
    pub node_count: usize,
    pub connection_count: usize,
    pub sim_duration: f64,
    /// k-th death time, or `sim_duration` when censored.
    pub network_lifetime: f64,
    pub lifetime_censored: bool,
    pub k_used: usize,
    pub total_energy: f64,
    pub energy_by_cause: BTreeMap<String, f64>,
    pub alive_nodes: usize,
    pub alive_fraction_threshold: f64,
    pub death_times: BTreeMap<u32, f64>,
    pub per_node_energy: BTreeMap<u32, f64>,
    pub packets_emitted: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub packets: PacketCounters,
    pub control: ControlCounters,
}

impl MetricsReport {
    pub fn lifetime(&self) -> Lifetime {
        if self.lifetime_censored {
            Lifetime::Censored(self.network_lifetime)
        } else {
            Lifetime::At(self.network_lifetime)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::Watts;
    use proptest::prelude::*;

    #[test]
    fn lifetime_order_statistic() {
        assert_eq!(network_lifetime(&[30.0, 10.0, 20.0], 2, 200.0), Lifetime::At(20.0));
        assert_eq!(network_lifetime(&[5.0], 2, 200.0), Lifetime::Censored(200.0));
    }

    #[test]
    fn lifetime_matches_sort_oracle() {
        // 26 deaths among 50 nodes, k = 25.
        let deaths: Vec<f64> = (0..26).map(|i| ((i * 37) % 26) as f64 * 7.5 + 0.25).collect();
        let mut oracle = deaths.clone();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(network_lifetime(&deaths, 25, 200.0), Lifetime::At(oracle[24]));
    }

    #[test]
    fn energy_sums() {
        assert_eq!(total_energy(&[]), 0.0);
        let mut l = EnergyLedger::new(100.0);
        l.charge_elapsed(200.0, Watts(0.0005), Watts(0.0002)).unwrap();
        assert!((total_energy(&[l.consumed()]) - 0.1).abs() < 1e-12);
        let by_cause = energy_by_cause([&l]);
        assert!((by_cause["idle"] - 0.1).abs() < 1e-12);
        assert_eq!(by_cause.len(), 7);
    }

    fn drained(initial: f64, to: f64) -> EnergyLedger {
        let mut l = EnergyLedger::new(initial);
        // Drain with 1 W idle draw over (initial − to) seconds.
        l.charge_elapsed(initial - to, Watts(1.0), Watts(0.0)).unwrap();
        l
    }

    #[test]
    fn alive_counts() {
        let fresh: Vec<_> = (0..5).map(|_| EnergyLedger::new(100.0)).collect();
        assert_eq!(alive_nodes(&fresh, 0.5), 5);
        assert_eq!(alive_nodes(&[drained(100.0, 50.0)], 0.5), 0);
        let mixed = [drained(100.0, 90.0), drained(100.0, 51.0), drained(100.0, 50.0), drained(100.0, 10.0)];
        assert_eq!(alive_nodes(&mixed, 0.5), 2);
    }

    #[test]
    fn conservation_check() {
        let mut p = PacketCounters {
            emitted: 10,
            delivered: 6,
            dropped_link_break: 2,
            in_flight_at_end: 1,
            ..Default::default()
        };
        assert!(!p.is_conserved());
        p.dropped_no_route = 1;
        assert!(p.is_conserved());
    }

    proptest! {
        #[test]
        fn lifetime_monotone_in_k(deaths in prop::collection::vec(0.0f64..200.0, 0..40), k in 1usize..40) {
            let a = network_lifetime(&deaths, k, 200.0).value();
            let b = network_lifetime(&deaths, k + 1, 200.0).value();
            prop_assert!(a <= b);
        }

        #[test]
        fn alive_monotone_in_threshold(rem in prop::collection::vec(0.0f64..100.0, 1..30), t in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let ledgers: Vec<_> = rem.iter().map(|&r| drained(100.0, r)).collect();
            let hi = (t + dt).min(1.0);
            prop_assert!(alive_nodes(&ledgers, t) >= alive_nodes(&ledgers, hi));
        }
    }
}
