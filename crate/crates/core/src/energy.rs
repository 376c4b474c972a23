//! Per-node energy ledger.
//!
//! Transmit and receive costs are charged as lump sums per packet, idle
//! and sleep draw are charged lazily for the time elapsed since the last
//! update. Two accounting models are supported:
//!
//! * [`EnergyModel::PerPacketEq`]: fixed per-bit coefficients (1.65 for
//!   transmit, 1.1 for receive) divided by the channel bandwidth,
//!   independent of the transmit power.
//! * [`EnergyModel::PowerDuration`]: power × airtime, so a lower transmit
//!   power directly lowers the transmit cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::Watts;

pub const TX_COEFFICIENT: f64 = 1.65;
pub const RX_COEFFICIENT: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnergyModel {
    PerPacketEq,
    PowerDuration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RadioState {
    Idle,
    Sleep,
    Tx,
    Rx,
    Dead,
}

impl RadioState {
    pub fn as_str(self) -> &'static str {
        match self {
            RadioState::Idle => "IDLE",
            RadioState::Sleep => "SLEEP",
            RadioState::Tx => "TX",
            RadioState::Rx => "RX",
            RadioState::Dead => "DEAD",
        }
    }
}

/// What a joule was spent on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCause {
    TxControl,
    TxData,
    RxControl,
    RxData,
    Idle,
    Sleep,
    Transition,
}

impl EnergyCause {
    pub const ALL: [EnergyCause; 7] = [
        EnergyCause::TxControl,
        EnergyCause::TxData,
        EnergyCause::RxControl,
        EnergyCause::RxData,
        EnergyCause::Idle,
        EnergyCause::Sleep,
        EnergyCause::Transition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyCause::TxControl => "tx_control",
            EnergyCause::TxData => "tx_data",
            EnergyCause::RxControl => "rx_control",
            EnergyCause::RxData => "rx_data",
            EnergyCause::Idle => "idle",
            EnergyCause::Sleep => "sleep",
            EnergyCause::Transition => "transition",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrafficClass {
    Control,
    Data,
}

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("node is dead and cannot be charged")]
    Dead,
    #[error("time went backwards: now {now} < state_since {since}")]
    TimeReversal { now: f64, since: f64 },
    #[error("transition requires SLEEP state, ledger is {0:?}")]
    NotSleeping(RadioState),
}

/// Seconds needed to clock `packet_size` bytes out at `bandwidth` bit/s.
pub fn airtime(packet_size: u32, bandwidth: f64) -> f64 {
    f64::from(packet_size) * 8.0 / bandwidth
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    remaining: f64,
    initial: f64,
    state: RadioState,
    state_since: f64,
    totals: [f64; 7],
    death_time: Option<f64>,
}

impl EnergyLedger {
    pub fn new(initial: f64) -> Self {
        EnergyLedger {
            remaining: initial,
            initial,
            state: RadioState::Idle,
            state_since: 0.0,
            totals: [0.0; 7],
            death_time: None,
        }
    }

    pub fn remaining(&self) -> f64 {
        self.remaining
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn consumed(&self) -> f64 {
        self.initial - self.remaining
    }

    pub fn state(&self) -> RadioState {
        self.state
    }

    pub fn state_since(&self) -> f64 {
        self.state_since
    }

    pub fn death_time(&self) -> Option<f64> {
        self.death_time
    }

    pub fn is_dead(&self) -> bool {
        self.state == RadioState::Dead
    }

    pub fn total(&self, cause: EnergyCause) -> f64 {
        self.totals[cause as usize]
    }

    pub fn totals_sum(&self) -> f64 {
        self.totals.iter().sum()
    }

    /// Debits up to `amount` joules, killing the node at `at` if the
    /// battery runs out. Returns the amount actually taken.
    fn debit(&mut self, amount: f64, cause: EnergyCause, at: f64) -> f64 {
        let taken = if amount >= self.remaining {
            let taken = self.remaining;
            self.remaining = 0.0;
            self.state = RadioState::Dead;
            self.death_time = Some(at);
            taken
        } else {
            self.remaining -= amount;
            amount
        };
        self.totals[cause as usize] += taken;
        taken
    }

    fn check_alive(&self) -> Result<(), EnergyError> {
        if self.is_dead() {
            Err(EnergyError::Dead)
        } else {
            Ok(())
        }
    }

    /// Charges one transmitted packet. `now` is the death instant if the
    /// charge empties the battery.
    pub fn charge_tx(
        &mut self,
        now: f64,
        packet_size: u32,
        tx_power: Watts,
        model: EnergyModel,
        bandwidth: f64,
        class: TrafficClass,
    ) -> Result<f64, EnergyError> {
        self.check_alive()?;
        let amount = match model {
            EnergyModel::PerPacketEq => TX_COEFFICIENT * f64::from(packet_size) * 8.0 / bandwidth,
            EnergyModel::PowerDuration => tx_power.0 * airtime(packet_size, bandwidth),
        };
        let cause = match class {
            TrafficClass::Control => EnergyCause::TxControl,
            TrafficClass::Data => EnergyCause::TxData,
        };
        Ok(self.debit(amount, cause, now))
    }

    /// Charges one received packet. Receive cost never depends on the link
    /// distance.
    pub fn charge_rx(
        &mut self,
        now: f64,
        packet_size: u32,
        rx_power: Watts,
        model: EnergyModel,
        bandwidth: f64,
        class: TrafficClass,
    ) -> Result<f64, EnergyError> {
        self.check_alive()?;
        let amount = match model {
            EnergyModel::PerPacketEq => RX_COEFFICIENT * f64::from(packet_size) * 8.0 / bandwidth,
            EnergyModel::PowerDuration => rx_power.0 * airtime(packet_size, bandwidth),
        };
        let cause = match class {
            TrafficClass::Control => EnergyCause::RxControl,
            TrafficClass::Data => EnergyCause::RxData,
        };
        Ok(self.debit(amount, cause, now))
    }

    /// Charges the background draw of the current state from `state_since`
    /// to `now`. A battery that empties mid-interval dies at the exact
    /// crossing instant. Calling this on a dead ledger is a no-op.
    pub fn charge_elapsed(&mut self, now: f64, idle_power: Watts, sleep_power: Watts) -> Result<f64, EnergyError> {
        if self.is_dead() {
            return Ok(0.0);
        }
        if now < self.state_since {
            return Err(EnergyError::TimeReversal {
                now,
                since: self.state_since,
            });
        }
        let (power, cause) = match self.state {
            RadioState::Sleep => (sleep_power.0, EnergyCause::Sleep),
            _ => (idle_power.0, EnergyCause::Idle),
        };
        let dt = now - self.state_since;
        let amount = power * dt;
        let crossing = if amount >= self.remaining && power > 0.0 {
            self.state_since + self.remaining / power
        } else {
            now
        };
        self.state_since = now;
        Ok(self.debit(amount, cause, crossing))
    }

    /// Enters SLEEP at `now`. Elapsed draw must already be settled.
    pub fn enter_sleep(&mut self, now: f64) -> Result<(), EnergyError> {
        self.check_alive()?;
        self.state = RadioState::Sleep;
        self.state_since = now;
        Ok(())
    }

    /// Wakes a sleeping node, paying the sleep → active transition cost.
    pub fn charge_transition(&mut self, now: f64, duration: f64, transition_power: Watts) -> Result<f64, EnergyError> {
        if self.state != RadioState::Sleep {
            return Err(EnergyError::NotSleeping(self.state));
        }
        let taken = self.debit(transition_power.0 * duration, EnergyCause::Transition, now);
        if !self.is_dead() {
            self.state = RadioState::Idle;
        }
        Ok(taken)
    }

    /// Remaining energy at `t` if only background draw happens until then.
    /// Does not modify the ledger.
    pub fn remaining_at(&self, t: f64, idle_power: Watts, sleep_power: Watts) -> f64 {
        if self.is_dead() || t <= self.state_since {
            return self.remaining;
        }
        let power = match self.state {
            RadioState::Sleep => sleep_power.0,
            _ => idle_power.0,
        };
        (self.remaining - power * (t - self.state_since)).max(0.0)
    }

    /// Strictly more than `fraction` of the initial energy is left.
    pub fn is_alive_at_threshold(&self, fraction: f64) -> bool {
        self.remaining > fraction * self.initial
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BW: f64 = 2e6;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn per_packet_coefficients() {
        let mut l = EnergyLedger::new(100.0);
        let tx = l.charge_tx(0.0, 512, Watts(5.0), EnergyModel::PerPacketEq, BW, TrafficClass::Data).unwrap();
        assert!(rel_close(tx, 3.3792e-3, 1e-12));
        let rx = l.charge_rx(0.0, 512, Watts(1.0), EnergyModel::PerPacketEq, BW, TrafficClass::Data).unwrap();
        assert!(rel_close(rx, 2.2528e-3, 1e-12));
    }

    #[test]
    fn power_duration_costs() {
        let mut l = EnergyLedger::new(100.0);
        let tx = l.charge_tx(0.0, 512, Watts(5.0), EnergyModel::PowerDuration, BW, TrafficClass::Data).unwrap();
        assert!(rel_close(tx, 1.024e-2, 1e-12));
        let rx = l.charge_rx(0.0, 512, Watts(1.0), EnergyModel::PowerDuration, BW, TrafficClass::Data).unwrap();
        assert!(rel_close(rx, 2.048e-3, 1e-12));
    }

    #[test]
    fn empty_packets_are_free() {
        let mut l = EnergyLedger::new(1.0);
        for model in [EnergyModel::PerPacketEq, EnergyModel::PowerDuration] {
            assert_eq!(l.charge_tx(0.0, 0, Watts(5.0), model, BW, TrafficClass::Control).unwrap(), 0.0);
            assert_eq!(l.charge_rx(0.0, 0, Watts(1.0), model, BW, TrafficClass::Control).unwrap(), 0.0);
        }
        assert_eq!(l.remaining(), 1.0);
    }

    #[test]
    fn idle_draw() {
        let mut l = EnergyLedger::new(100.0);
        let e = l.charge_elapsed(200.0, Watts(0.0005), Watts(0.0002)).unwrap();
        assert!(rel_close(e, 0.1, 1e-12));
        assert_eq!(l.charge_elapsed(200.0, Watts(0.0005), Watts(0.0002)).unwrap(), 0.0);
        assert!(rel_close(l.total(EnergyCause::Idle), 0.1, 1e-12));
    }

    #[test]
    fn idle_death_at_exact_crossing() {
        let mut l = EnergyLedger::new(0.0001);
        l.charge_elapsed(3.0, Watts(0.0), Watts(0.0)).unwrap();
        l.charge_elapsed(4.0, Watts(0.0005), Watts(0.0002)).unwrap();
        assert!(l.is_dead());
        assert!((l.death_time().unwrap() - 3.2).abs() < 1e-12);
        assert_eq!(l.remaining(), 0.0);
    }

    #[test]
    fn time_reversal_is_rejected() {
        let mut l = EnergyLedger::new(1.0);
        l.charge_elapsed(5.0, Watts(0.0005), Watts(0.0)).unwrap();
        assert!(matches!(
            l.charge_elapsed(4.0, Watts(0.0005), Watts(0.0)),
            Err(EnergyError::TimeReversal { .. })
        ));
    }

    #[test]
    fn transition_from_sleep() {
        let mut l = EnergyLedger::new(1.0);
        l.enter_sleep(0.0).unwrap();
        let e = l.charge_transition(0.0, 0.01, Watts(0.03)).unwrap();
        assert!(rel_close(e, 3e-4, 1e-12));
        assert_eq!(l.state(), RadioState::Idle);
        assert_eq!(l.charge_transition(0.0, 0.01, Watts(0.03)), Err(EnergyError::NotSleeping(RadioState::Idle)));

        l.enter_sleep(1.0).unwrap();
        assert_eq!(l.charge_transition(1.0, 0.0, Watts(0.03)).unwrap(), 0.0);
        assert_eq!(l.state(), RadioState::Idle);
    }

    #[test]
    fn sleep_draws_sleep_power() {
        let mut l = EnergyLedger::new(1.0);
        l.enter_sleep(0.0).unwrap();
        l.charge_elapsed(10.0, Watts(0.0005), Watts(0.0002)).unwrap();
        assert!(rel_close(l.total(EnergyCause::Sleep), 0.002, 1e-12));
        assert_eq!(l.total(EnergyCause::Idle), 0.0);
    }

    #[test]
    fn dead_ledger_refuses_charges() {
        let mut l = EnergyLedger::new(0.005);
        let taken = l.charge_tx(7.0, 512, Watts(5.0), EnergyModel::PowerDuration, BW, TrafficClass::Data).unwrap();
        assert_eq!(taken, 0.005);
        assert!(l.is_dead());
        assert_eq!(l.death_time(), Some(7.0));
        assert_eq!(
            l.charge_rx(8.0, 512, Watts(1.0), EnergyModel::PowerDuration, BW, TrafficClass::Data),
            Err(EnergyError::Dead)
        );
    }

    #[test]
    fn alive_threshold_is_strict() {
        let mut l = EnergyLedger::new(100.0);
        l.debit(40.0, EnergyCause::TxData, 0.0);
        assert!(l.is_alive_at_threshold(0.5));
        l.debit(10.0, EnergyCause::TxData, 0.0);
        assert!(!l.is_alive_at_threshold(0.5));
        l.debit(50.0, EnergyCause::TxData, 0.0);
        for f in [0.0, 0.3, 1.0] {
            assert!(!l.is_alive_at_threshold(f));
        }
    }

    #[derive(Clone, Debug)]
    enum Op {
        Tx(u32, f64),
        Rx(u32),
        Elapsed(f64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..2000, 0.0f64..10.0).prop_map(|(s, p)| Op::Tx(s, p)),
            (0u32..2000).prop_map(Op::Rx),
            (0.0f64..50.0).prop_map(Op::Elapsed),
        ]
    }

    proptest! {
        #[test]
        fn conservation_and_monotonicity(initial in 0.01f64..5.0, ops in prop::collection::vec(op(), 1..200)) {
            let mut l = EnergyLedger::new(initial);
            let mut now = 0.0;
            let mut last = initial;
            for op in ops {
                if l.is_dead() {
                    break;
                }
                match op {
                    Op::Tx(s, p) => { l.charge_tx(now, s, Watts(p), EnergyModel::PowerDuration, BW, TrafficClass::Data).unwrap(); }
                    Op::Rx(s) => { l.charge_rx(now, s, Watts(1.0), EnergyModel::PerPacketEq, BW, TrafficClass::Control).unwrap(); }
                    Op::Elapsed(dt) => { now += dt; l.charge_elapsed(now, Watts(0.0005), Watts(0.0002)).unwrap(); }
                }
                prop_assert!(l.remaining() <= last);
                prop_assert!(l.remaining() >= 0.0);
                last = l.remaining();
                prop_assert!((l.remaining() + l.totals_sum() - initial).abs() <= 1e-9 * initial);
                prop_assert_eq!(l.is_dead(), l.remaining() == 0.0);
                prop_assert_eq!(l.is_dead(), l.death_time().is_some());
            }
        }
    }
}
