//! Free-space propagation: Friis equation in the log domain, dBm/W
//! conversion, and the transmit power needed to close a link of a given
//! length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Free-space loss added by each doubling of the link distance, in dB.
pub const DOUBLING_LOSS_DB: f64 = 6.020_599_913_279_624;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("link distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
}

/// Power level in dBm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dbm(pub f64);

/// Power level in watts.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Watts(pub f64);

impl Dbm {
    pub fn to_watts(self) -> Watts {
        dbm_to_watts(self)
    }
}

impl Watts {
    pub fn to_dbm(self) -> Dbm {
        Dbm(10.0 * (self.0 * 1e3).log10())
    }
}

pub fn dbm_to_watts(p: Dbm) -> Watts {
    Watts(10f64.powf(p.0 / 10.0) * 1e-3)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioParams {
    pub frequency: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Minimum received power for a successful decode.
    pub rx_threshold: Dbm,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            frequency: 2.4e9,
            tx_gain: 1.0,
            rx_gain: 1.0,
            rx_threshold: Dbm(-84.0),
        }
    }
}

impl RadioParams {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    fn gain_db(&self) -> f64 {
        10.0 * (self.tx_gain * self.rx_gain).log10()
    }

    /// `20·log10(4πr/λ)`, the free-space path loss at `r` metres.
    fn path_loss_db(&self, r: f64) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * r / self.wavelength()).log10()
    }
}

/// Power received at distance `r` from a transmitter radiating `pt`.
pub fn received_power(pt: Dbm, r: f64, params: &RadioParams) -> Result<Dbm, RadioError> {
    if r <= 0.0 || r.is_nan() {
        return Err(RadioError::NonPositiveDistance(r));
    }
    Ok(Dbm(pt.0 + params.gain_db() - params.path_loss_db(r)))
}

/// Smallest transmit power whose signal still arrives at `r` metres with
/// exactly the receive threshold. Strictly increasing in `r`.
pub fn required_tx_power(r: f64, params: &RadioParams) -> Result<Dbm, RadioError> {
    if r <= 0.0 || r.is_nan() {
        return Err(RadioError::NonPositiveDistance(r));
    }
    Ok(Dbm(params.rx_threshold.0 - params.gain_db() + params.path_loss_db(r)))
}

/// Distance at which a transmission at `pt` fades to the receive threshold.
pub fn range_for_power(pt: Dbm, params: &RadioParams) -> f64 {
    let path_loss = pt.0 + params.gain_db() - params.rx_threshold.0;
    params.wavelength() / (4.0 * std::f64::consts::PI) * 10f64.powf(path_loss / 20.0)
}

/// Power used for every common-range transmission (all AODV traffic and
/// all control broadcasts).
pub fn common_range_power(params: &RadioParams, common_range: f64) -> Result<Dbm, RadioError> {
    required_tx_power(common_range, params)
}

/// One line of the distance → transmit-power table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerRow {
    pub distance_m: f64,
    pub pt_dbm: f64,
}

/// Distances of the standard transmit-power table.
pub const TABLE_DISTANCES: [f64; 6] = [50.0, 100.0, 150.0, 200.0, 250.0, 400.0];

pub fn power_table(distances: &[f64], params: &RadioParams) -> Result<Vec<PowerRow>, RadioError> {
    distances
        .iter()
        .map(|&d| {
            Ok(PowerRow {
                distance_m: d,
                pt_dbm: required_tx_power(d, params)?.0,
            })
        })
        .collect()
}
