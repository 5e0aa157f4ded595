//! Sensor node: deep sleep -> wake -> sample -> transmit, with a coulomb-counting battery.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::farm::Tank;
use crate::frame::{Reading, SensorFrame, SensorKind};
use crate::link::{min_interval_s, DutyCyclePolicy};
use crate::time::SimTime;

const COULOMBS_PER_MAH: f64 = 3.6;
const V_FULL: f64 = 4.2;
const V_EMPTY: f64 = 3.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("interval {interval_s} s violates the duty-cycle cap (minimum {min_interval_s:.3} s for {airtime_s:.4} s airtime)")]
    DutyCycleViolation {
        interval_s: f64,
        min_interval_s: f64,
        airtime_s: f64,
    },
    #[error("invalid power profile '{0}': {1}")]
    InvalidProfile(String, String),
    #[error("unknown power profile '{0}'")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub name: String,
    pub sleep_current_a: f64,
    pub active_current_a: f64,
    pub wake_duration_s: f64,
    pub battery_capacity_mah: f64,
}

impl PowerProfile {
    /// Calibrated to the field prototype: 37.9 mA average at a 600 s cadence
    /// drains 2500 mAh in about 66 h. The board never reaches true deep sleep.
    pub fn prototype() -> Self {
        Self {
            name: "prototype".into(),
            sleep_current_a: 0.0375,
            active_current_a: 0.1175,
            wake_duration_s: 3.0,
            battery_capacity_mah: 2500.0,
        }
    }

    /// 10 uA deep sleep, 120 mA for 5 s per wake, 1000 mAh.
    pub fn optimized() -> Self {
        Self {
            name: "optimized".into(),
            sleep_current_a: 10e-6,
            active_current_a: 0.120,
            wake_duration_s: 5.0,
            battery_capacity_mah: 1000.0,
        }
    }

    pub fn named(name: &str) -> Result<Self, NodeError> {
        match name {
            "prototype" => Ok(Self::prototype()),
            "optimized" => Ok(Self::optimized()),
            other => Err(NodeError::UnknownProfile(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        let bad = |m: &str| Err(NodeError::InvalidProfile(self.name.clone(), m.to_string()));
        if !(self.sleep_current_a > 0.0
            && self.active_current_a > 0.0
            && self.wake_duration_s > 0.0
            && self.battery_capacity_mah > 0.0)
        {
            return bad("all parameters must be positive");
        }
        if !(self.sleep_current_a < self.active_current_a) {
            return bad("sleep current must be below active current");
        }
        Ok(())
    }

    pub fn capacity_coulombs(&self) -> f64 {
        self.battery_capacity_mah * COULOMBS_PER_MAH
    }

    /// Average draw in amperes for one wake every `interval_s`.
    pub fn average_current_a(&self, interval_s: f64) -> f64 {
        let awake = self.wake_duration_s.min(interval_s);
        (self.active_current_a * awake + self.sleep_current_a * (interval_s - awake)) / interval_s
    }

    /// Closed-form coulomb-count lifetime in seconds.
    pub fn lifetime_s(&self, interval_s: f64) -> f64 {
        self.capacity_coulombs() / self.average_current_a(interval_s)
    }
}

/// Profile reference in a scenario: a shipped name or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Custom(PowerProfile),
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<PowerProfile, NodeError> {
        let p = match self {
            ProfileSpec::Named(n) => PowerProfile::named(n)?,
            ProfileSpec::Custom(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Per-sensor Gaussian noise (standard deviation, sensor units).
    pub noise_sigma: BTreeMap<SensorKind, f64>,
    /// Average 60 one-second samples instead of one instantaneous reading.
    pub continuous_1hz: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            noise_sigma: BTreeMap::from([
                (SensorKind::WaterTemperatureC, 0.1),
                (SensorKind::DissolvedOxygenMgl, 0.05),
                (SensorKind::Ph, 0.01),
                (SensorKind::TurbidityNtu, 0.1),
                (SensorKind::AmmoniaMgl, 0.005),
            ]),
            continuous_1hz: false,
        }
    }
}

impl SamplingConfig {
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: BTreeMap::new(),
            continuous_1hz: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeMode {
    DeepSleep,
    Active,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub node_id: u32,
    pub tank_id: String,
    pub location: String,
    pub mode: NodeMode,
    pub seq_next: u16,
    pub battery_mah_remaining: f64,
    pub sample_buffer: Vec<Reading>,
    pub profile: PowerProfile,
    pub sensors: Vec<SensorKind>,
    pub sampling: SamplingConfig,
    /// End of the last wake; the node starts asleep at t = 0.
    pub asleep_since: SimTime,
    pub died_at: Option<SimTime>,
}

impl NodeState {
    pub fn new(
        node_id: u32,
        tank_id: impl Into<String>,
        location: impl Into<String>,
        profile: PowerProfile,
        sensors: Vec<SensorKind>,
        sampling: SamplingConfig,
    ) -> Self {
        Self {
            node_id,
            tank_id: tank_id.into(),
            location: location.into(),
            mode: NodeMode::DeepSleep,
            seq_next: 0,
            battery_mah_remaining: profile.battery_capacity_mah,
            sample_buffer: Vec::new(),
            profile,
            sensors,
            sampling,
            asleep_since: SimTime::ZERO,
            died_at: None,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.mode == NodeMode::Dead
    }

    pub fn battery_fraction(&self) -> f64 {
        (self.battery_mah_remaining / self.profile.battery_capacity_mah).clamp(0.0, 1.0)
    }

    /// Reported battery voltage: linear from 4.2 V full to 3.3 V empty.
    pub fn battery_mv(&self) -> u16 {
        ((V_EMPTY + (V_FULL - V_EMPTY) * self.battery_fraction()) * 1000.0).round() as u16
    }

    /// Time at which the battery empties if the node stays asleep.
    pub fn depletion_time(&self) -> Option<SimTime> {
        match self.mode {
            NodeMode::Dead => None,
            _ => {
                // Round up so draining to this instant always empties the cell.
                let left_ms = self.battery_mah_remaining * COULOMBS_PER_MAH
                    / self.profile.sleep_current_a
                    * 1000.0;
                Some(SimTime(self.asleep_since.0.saturating_add(left_ms.ceil() as u64)))
            }
        }
    }

    fn die(&mut self, at: SimTime) {
        self.mode = NodeMode::Dead;
        self.battery_mah_remaining = 0.0;
        self.died_at = Some(at);
        self.sample_buffer.clear();
    }

    /// Charge the sleep current up to `now`, dying if it runs out.
    pub fn drain_until(&mut self, now: SimTime) {
        if self.is_dead() {
            return;
        }
        let slept = (now - self.asleep_since).max(0.0);
        let needed = self.profile.sleep_current_a * slept / COULOMBS_PER_MAH;
        if needed >= self.battery_mah_remaining - 1e-9 {
            let at = self.depletion_time().unwrap_or(now);
            self.die(at.min(now));
        } else {
            self.battery_mah_remaining -= needed;
            self.asleep_since = now;
        }
    }

    pub fn sample_sensors<R: Rng + ?Sized>(&self, tank: &Tank, rng: &mut R) -> Vec<Reading> {
        self.sensors
            .iter()
            .map(|&kind| {
                let truth = tank.value(kind);
                let sigma = self.sampling.noise_sigma.get(&kind).copied().unwrap_or(0.0);
                let value = if sigma > 0.0 {
                    let dist = Normal::new(0.0, sigma).expect("sigma is positive");
                    if self.sampling.continuous_1hz {
                        truth + (0..60).map(|_| dist.sample(rng)).sum::<f64>() / 60.0
                    } else {
                        truth + dist.sample(rng)
                    }
                } else {
                    truth
                };
                Reading {
                    kind,
                    value: value as f32,
                }
            })
            .collect()
    }

    /// Wake at `now`, sample `tank` and build the next frame. Returns `None`
    /// once the battery is exhausted; the node is then dead for good.
    pub fn wake_and_transmit<R: Rng + ?Sized>(
        &mut self,
        tank: &Tank,
        now: SimTime,
        clock_epoch_s: u32,
        rng: &mut R,
    ) -> Option<SensorFrame> {
        self.drain_until(now);
        if self.is_dead() {
            return None;
        }
        self.mode = NodeMode::Active;
        let wake_mah = self.profile.active_current_a * self.profile.wake_duration_s / COULOMBS_PER_MAH;
        if wake_mah >= self.battery_mah_remaining {
            let left = self.battery_mah_remaining * COULOMBS_PER_MAH / self.profile.active_current_a;
            self.die(now + left);
            return None;
        }
        self.battery_mah_remaining -= wake_mah;

        self.sample_buffer = self.sample_sensors(tank, rng);
        let frame = SensorFrame {
            node_id: self.node_id,
            seq: self.seq_next,
            timestamp_s: clock_epoch_s.wrapping_add(now.as_secs_f64() as u32),
            readings: self.sample_buffer.clone(),
            battery_mv: self.battery_mv(),
        };
        self.seq_next = self.seq_next.wrapping_add(1);
        self.asleep_since = now + self.profile.wake_duration_s;
        self.mode = NodeMode::DeepSleep;
        Some(frame)
    }
}

/// Next wake time, refusing any cadence that would break the duty-cycle policy.
pub fn schedule_next_wake(
    now: SimTime,
    interval_s: f64,
    policy: &DutyCyclePolicy,
    airtime_s: f64,
) -> Result<SimTime, NodeError> {
    if !policy.permits_periodic(airtime_s, interval_s) {
        return Err(NodeError::DutyCycleViolation {
            interval_s,
            min_interval_s: min_interval_s(airtime_s, policy),
            airtime_s,
        });
    }
    Ok(now + interval_s)
}
