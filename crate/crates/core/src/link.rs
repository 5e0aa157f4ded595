//! Radio-layer mathematics: free-space path loss, calibrated RSSI prediction,
//! reachability, LoRa time-on-air and duty-cycle limits.
//!
//! Units: distances in km, frequency in MHz, power in dBm, gains in dBi,
//! losses in dB, times in seconds.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Relative slack for floating-point comparisons against regulatory limits.
const LIMIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid radio config: {0}")]
    InvalidConfig(String),
    #[error("calibration error: {0}")]
    Calibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub frequency_mhz: f64,
    pub spreading_factor: u8,
    pub bandwidth_hz: u32,
    /// Coding rate 4/x, x in 5..=8.
    pub coding_rate_denominator: u8,
    pub preamble_symbols: u16,
    pub tx_power_dbm: f64,
    pub tx_antenna_gain_dbi: f64,
    pub rx_antenna_gain_dbi: f64,
    pub rx_sensitivity_dbm: f64,
}

impl Default for RadioConfig {
    /// 915 MHz, SF7, 125 kHz, CR 4/5, 17 dBm, 3 dBi on both ends, -123 dBm sensitivity.
    fn default() -> Self {
        Self {
            frequency_mhz: 915.0,
            spreading_factor: 7,
            bandwidth_hz: 125_000,
            coding_rate_denominator: 5,
            preamble_symbols: 8,
            tx_power_dbm: 17.0,
            tx_antenna_gain_dbi: 3.0,
            rx_antenna_gain_dbi: 3.0,
            rx_sensitivity_dbm: -123.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: &str| Err(LinkError::InvalidConfig(m.to_string()));
        if !(self.frequency_mhz > 0.0) {
            return bad("frequency_mhz must be > 0");
        }
        if self.bandwidth_hz == 0 {
            return bad("bandwidth_hz must be > 0");
        }
        if !(7..=12).contains(&self.spreading_factor) {
            return bad("spreading_factor must be in 7..=12");
        }
        if !(5..=8).contains(&self.coding_rate_denominator) {
            return bad("coding_rate_denominator must be in 5..=8");
        }
        if !(self.rx_sensitivity_dbm < 0.0) {
            return bad("rx_sensitivity_dbm must be negative");
        }
        Ok(())
    }

    /// EIRP plus receive gain: the budget available before path loss.
    pub fn link_budget_gain_db(&self) -> f64 {
        self.tx_power_dbm + self.tx_antenna_gain_dbi + self.rx_antenna_gain_dbi
    }

    pub fn symbol_time_s(&self) -> f64 {
        f64::from(1u32 << self.spreading_factor) / f64::from(self.bandwidth_hz)
    }

    /// Low data rate optimization is mandated when a symbol lasts 16 ms or more
    /// (SF11 and SF12 at 125 kHz).
    pub fn low_data_rate_optimize(&self) -> bool {
        self.symbol_time_s() >= 0.016
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Obstruction {
    None,
    Buildings,
    Forest,
}

impl fmt::Display for Obstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Obstruction::None => "none",
            Obstruction::Buildings => "buildings",
            Obstruction::Forest => "forest",
        })
    }
}

impl FromStr for Obstruction {
    type Err = LinkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "none" => Ok(Obstruction::None),
            "buildings" | "building" => Ok(Obstruction::Buildings),
            "forest" => Ok(Obstruction::Forest),
            other => Err(LinkError::Domain(format!("unknown obstruction class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyPoint {
    pub label: String,
    pub distance_km: f64,
    /// `None` means the receiver logged no signal at this point.
    #[serde(default)]
    pub measured_rssi_dbm: Option<f64>,
    #[serde(default = "default_obstruction")]
    pub obstruction: Obstruction,
}

fn default_obstruction() -> Obstruction {
    Obstruction::None
}

impl SurveyPoint {
    pub fn new(label: impl Into<String>, distance_km: f64) -> Self {
        Self {
            label: label.into(),
            distance_km,
            measured_rssi_dbm: None,
            obstruction: Obstruction::None,
        }
    }

    pub fn measured(mut self, rssi_dbm: f64) -> Self {
        self.measured_rssi_dbm = Some(rssi_dbm);
        self
    }

    pub fn obstructed(mut self, obstruction: Obstruction) -> Self {
        self.obstruction = obstruction;
        self
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.distance_km > 0.0) {
            return Err(LinkError::Domain(format!(
                "point {}: distance must be > 0",
                self.label
            )));
        }
        if let Some(rssi) = self.measured_rssi_dbm {
            if !(rssi < 0.0) {
                return Err(LinkError::Domain(format!(
                    "point {}: measured RSSI must be negative",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Calibration beyond free space: one fitted constant plus a per-class obstruction loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteModel {
    pub site_excess_db: f64,
    #[serde(default = "default_obstruction_losses")]
    pub obstruction_loss_db: BTreeMap<Obstruction, f64>,
}

pub const DEFAULT_BUILDINGS_LOSS_DB: f64 = 20.0;
pub const DEFAULT_FOREST_LOSS_DB: f64 = 20.0;

pub fn default_obstruction_losses() -> BTreeMap<Obstruction, f64> {
    BTreeMap::from([
        (Obstruction::None, 0.0),
        (Obstruction::Buildings, DEFAULT_BUILDINGS_LOSS_DB),
        (Obstruction::Forest, DEFAULT_FOREST_LOSS_DB),
    ])
}

impl SiteModel {
    pub fn new(site_excess_db: f64) -> Self {
        Self {
            site_excess_db,
            obstruction_loss_db: default_obstruction_losses(),
        }
    }

    pub fn with_obstruction_loss(mut self, class: Obstruction, loss_db: f64) -> Self {
        if class != Obstruction::None {
            self.obstruction_loss_db.insert(class, loss_db);
        }
        self
    }

    pub fn obstruction_loss(&self, class: Obstruction) -> f64 {
        match class {
            Obstruction::None => 0.0,
            c => self.obstruction_loss_db.get(&c).copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.site_excess_db >= 0.0) {
            return Err(LinkError::Domain("site_excess_db must be >= 0".into()));
        }
        if self
            .obstruction_loss_db
            .get(&Obstruction::None)
            .is_some_and(|&v| v != 0.0)
        {
            return Err(LinkError::Domain("obstruction loss for 'none' must be 0".into()));
        }
        if self.obstruction_loss_db.values().any(|v| !(*v >= 0.0)) {
            return Err(LinkError::Domain("obstruction losses must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DutyCyclePolicy {
    pub cap_fraction: f64,
    pub window_s: f64,
}

impl Default for DutyCyclePolicy {
    fn default() -> Self {
        Self {
            cap_fraction: 0.01,
            window_s: 3600.0,
        }
    }
}

impl DutyCyclePolicy {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.cap_fraction > 0.0 && self.cap_fraction <= 1.0) {
            return Err(LinkError::Domain("cap_fraction must be in (0, 1]".into()));
        }
        if !(self.window_s > 0.0) {
            return Err(LinkError::Domain("window_s must be > 0".into()));
        }
        Ok(())
    }

    /// Whether one frame of `airtime_s` every `interval_s` keeps every sliding
    /// window under the cap.
    ///
    /// `interval_s >= min_interval_s` bounds the long-run average only; a window
    /// that is not a multiple of the interval can still catch one extra frame, so
    /// the exact per-window maximum is checked as well.
    pub fn permits_periodic(&self, airtime_s: f64, interval_s: f64) -> bool {
        if !(airtime_s > 0.0) || !(interval_s >= airtime_s) {
            return false;
        }
        let min = min_interval_s(airtime_s, self);
        if interval_s < min * (1.0 - LIMIT_EPS) {
            return false;
        }
        let budget = self.cap_fraction * self.window_s;
        max_window_airtime_s(airtime_s, interval_s, self.window_s) <= budget * (1.0 + LIMIT_EPS)
    }
}

/// Free-space loss in dB: 32.45 + 20 log10(D km) + 20 log10(f MHz).
pub fn free_space_loss(distance_km: f64, frequency_mhz: f64) -> Result<f64, LinkError> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(LinkError::Domain(format!(
            "distance must be positive and finite, got {distance_km}"
        )));
    }
    if !(frequency_mhz > 0.0) || !frequency_mhz.is_finite() {
        return Err(LinkError::Domain(format!(
            "frequency must be positive and finite, got {frequency_mhz}"
        )));
    }
    Ok(32.45 + 20.0 * distance_km.log10() + 20.0 * frequency_mhz.log10())
}

/// Received power predicted from free space without any site calibration.
pub fn free_space_rssi(cfg: &RadioConfig, distance_km: f64) -> Result<f64, LinkError> {
    Ok(cfg.link_budget_gain_db() - free_space_loss(distance_km, cfg.frequency_mhz)?)
}

pub fn predict_rssi(
    cfg: &RadioConfig,
    site: &SiteModel,
    point: &SurveyPoint,
) -> Result<f64, LinkError> {
    Ok(free_space_rssi(cfg, point.distance_km)?
        - site.site_excess_db
        - site.obstruction_loss(point.obstruction))
}

/// Least-squares constant offset between free-space prediction and measurement,
/// over unobstructed points that recorded a signal.
pub fn fit_site_excess(cfg: &RadioConfig, points: &[SurveyPoint]) -> Result<f64, LinkError> {
    let residuals = points
        .iter()
        .filter(|p| p.obstruction == Obstruction::None)
        .filter_map(|p| p.measured_rssi_dbm.map(|m| (p, m)))
        .map(|(p, measured)| Ok(free_space_rssi(cfg, p.distance_km)? - measured))
        .collect::<Result<Vec<f64>, LinkError>>()?;
    if residuals.is_empty() {
        return Err(LinkError::Calibration(
            "no unobstructed survey point with a measured RSSI".into(),
        ));
    }
    Ok(residuals.iter().sum::<f64>() / residuals.len() as f64)
}

pub fn is_reachable(cfg: &RadioConfig, site: &SiteModel, point: &SurveyPoint) -> bool {
    if point.distance_km <= 0.0 {
        // Loss tends to -inf as distance -> 0.
        return point.obstruction == Obstruction::None
            || site.obstruction_loss(point.obstruction).is_finite();
    }
    match predict_rssi(cfg, site, point) {
        Ok(rssi) => rssi >= cfg.rx_sensitivity_dbm,
        Err(_) => false,
    }
}

/// Number of payload symbols for an explicit-header frame with CRC enabled.
pub fn payload_symbols(cfg: &RadioConfig, total_frame_bytes: usize) -> u32 {
    let sf = i64::from(cfg.spreading_factor);
    let de = i64::from(cfg.low_data_rate_optimize());
    let numerator = 8 * total_frame_bytes as i64 - 4 * sf + 28 + 16;
    let denominator = 4 * (sf - 2 * de);
    let blocks = if numerator > 0 {
        (numerator + denominator - 1) / denominator
    } else {
        0
    };
    8 + (blocks * i64::from(cfg.coding_rate_denominator)) as u32
}

/// Time on air of one frame.
pub fn airtime_s(cfg: &RadioConfig, total_frame_bytes: usize) -> f64 {
    let symbols = f64::from(cfg.preamble_symbols) + 4.25 + f64::from(payload_symbols(cfg, total_frame_bytes));
    symbols * cfg.symbol_time_s()
}

/// Shortest interval whose long-run channel occupancy stays within the cap.
pub fn min_interval_s(airtime_s: f64, policy: &DutyCyclePolicy) -> f64 {
    airtime_s / policy.cap_fraction
}

/// Largest total airtime any window of `window_s` can see when frames of
/// `airtime_s` start every `interval_s` (requires `interval_s >= airtime_s`).
pub fn max_window_airtime_s(airtime_s: f64, interval_s: f64, window_s: f64) -> f64 {
    let full = (window_s / interval_s).floor();
    let remainder = (window_s - full * interval_s).max(0.0);
    full * airtime_s + remainder.min(airtime_s)
}
