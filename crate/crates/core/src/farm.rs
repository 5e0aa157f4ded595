//! Synthetic tank environment.
//!
//! Temperature follows a diurnal sinusoid with Gaussian noise. Dissolved oxygen
//! relaxes first-order toward a temperature-dependent equilibrium; aeration adds
//! a constant rate. While a `do_crash` anomaly is active the oxygen demand
//! overwhelms passive re-aeration, so relaxation is suspended and DO moves
//! linearly at `aeration - crash`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::time::SimTime;

pub const DO_MAX_MGL: f64 = 15.0;
pub const TEMP_MAX_C: f64 = 45.0;
pub const PH_MAX: f64 = 14.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FarmError {
    #[error("unknown tank '{0}'")]
    UnknownTank(String),
    #[error("invalid farm parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FarmParams {
    pub temp_mean_c: f64,
    pub temp_amplitude_c: f64,
    pub temp_period_s: f64,
    /// Time of day (s) at which the sinusoid crosses the mean going up.
    pub temp_phase_s: f64,
    pub temp_noise_sigma_c: f64,
    /// DO_eq(T) = do_eq_at_ref_mgl - do_eq_slope_mgl_per_c * (T - do_eq_ref_temp_c)
    pub do_eq_at_ref_mgl: f64,
    pub do_eq_ref_temp_c: f64,
    pub do_eq_slope_mgl_per_c: f64,
    pub do_relax_time_s: f64,
    pub aeration_mgl_per_min: f64,
    pub loss_threshold_mgl: f64,
    pub loss_window_s: f64,
    pub tick_s: f64,
}

impl Default for FarmParams {
    fn default() -> Self {
        Self {
            temp_mean_c: 24.0,
            temp_amplitude_c: 4.0,
            temp_period_s: 86_400.0,
            temp_phase_s: 32_400.0,
            temp_noise_sigma_c: 0.05,
            do_eq_at_ref_mgl: 10.0,
            do_eq_ref_temp_c: 20.0,
            do_eq_slope_mgl_per_c: 0.2,
            do_relax_time_s: 1800.0,
            aeration_mgl_per_min: 0.1,
            loss_threshold_mgl: 3.0,
            loss_window_s: 1800.0,
            tick_s: 60.0,
        }
    }
}

impl FarmParams {
    pub fn do_equilibrium(&self, temperature_c: f64) -> f64 {
        (self.do_eq_at_ref_mgl - self.do_eq_slope_mgl_per_c * (temperature_c - self.do_eq_ref_temp_c))
            .clamp(0.0, DO_MAX_MGL)
    }

    /// Noise-free diurnal temperature at a time of day.
    pub fn diurnal_temperature(&self, time_of_day_s: f64) -> f64 {
        self.temp_mean_c
            + self.temp_amplitude_c * (TAU * (time_of_day_s - self.temp_phase_s) / self.temp_period_s).sin()
    }

    pub fn validate(&self) -> Result<(), FarmError> {
        let bad = |m: &str| Err(FarmError::InvalidParam(m.to_string()));
        if !(self.temp_period_s > 0.0) {
            return bad("temp_period_s must be > 0");
        }
        if !(self.do_relax_time_s > 0.0) {
            return bad("do_relax_time_s must be > 0");
        }
        if !(self.tick_s > 0.0) {
            return bad("tick_s must be > 0");
        }
        if !(self.temp_noise_sigma_c >= 0.0) {
            return bad("temp_noise_sigma_c must be >= 0");
        }
        if !(self.loss_window_s >= 0.0) {
            return bad("loss_window_s must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TankKind {
    RasGreenhouse,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    pub tank_id: String,
    pub kind: TankKind,
    pub temperature_c: f64,
    pub dissolved_oxygen_mgl: f64,
    pub ph: f64,
    #[serde(default = "default_turbidity")]
    pub turbidity_ntu: f64,
    #[serde(default = "default_ammonia")]
    pub ammonia_mgl: f64,
    #[serde(default)]
    pub aeration_on: bool,
    #[serde(default)]
    pub production_lost: bool,
    #[serde(default)]
    pub do_below_since: Option<SimTime>,
    /// Sum of active `do_crash` magnitudes, mg/L per hour.
    #[serde(default)]
    pub do_crash_mgl_per_h: f64,
    /// Sum of active `heat_spike` magnitudes, degrees C.
    #[serde(default)]
    pub heat_offset_c: f64,
}

fn default_turbidity() -> f64 {
    5.0
}

fn default_ammonia() -> f64 {
    0.1
}

impl Tank {
    pub fn new(tank_id: impl Into<String>, kind: TankKind) -> Self {
        Self {
            tank_id: tank_id.into(),
            kind,
            temperature_c: 24.0,
            dissolved_oxygen_mgl: 9.2,
            ph: 7.8,
            turbidity_ntu: default_turbidity(),
            ammonia_mgl: default_ammonia(),
            aeration_on: false,
            production_lost: false,
            do_below_since: None,
            do_crash_mgl_per_h: 0.0,
            heat_offset_c: 0.0,
        }
    }

    pub fn clamp(&mut self) {
        self.dissolved_oxygen_mgl = self.dissolved_oxygen_mgl.clamp(0.0, DO_MAX_MGL);
        self.temperature_c = self.temperature_c.clamp(0.0, TEMP_MAX_C);
        self.ph = self.ph.clamp(0.0, PH_MAX);
    }

    pub fn value(&self, kind: crate::frame::SensorKind) -> f64 {
        use crate::frame::SensorKind::*;
        match kind {
            WaterTemperatureC => self.temperature_c,
            DissolvedOxygenMgl => self.dissolved_oxygen_mgl,
            Ph => self.ph,
            TurbidityNtu => self.turbidity_ntu,
            AmmoniaMgl => self.ammonia_mgl,
        }
    }

    /// Advance by `dt_s`. DO is integrated with the temperature held at its
    /// value at the start of the step; temperature is then resampled at
    /// `time_of_day_s` (the end of the step).
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        params: &FarmParams,
        dt_s: f64,
        time_of_day_s: f64,
        rng: &mut R,
    ) {
        assert!(dt_s > 0.0, "dt must be positive");
        let aeration = if self.aeration_on {
            params.aeration_mgl_per_min / 60.0
        } else {
            0.0
        };
        if self.do_crash_mgl_per_h > 0.0 {
            let crash = self.do_crash_mgl_per_h / 3600.0;
            self.dissolved_oxygen_mgl += (aeration - crash) * dt_s;
        } else {
            let tau = params.do_relax_time_s;
            let target = params.do_equilibrium(self.temperature_c) + tau * aeration;
            let decay = (-dt_s / tau).exp();
            self.dissolved_oxygen_mgl = target + (self.dissolved_oxygen_mgl - target) * decay;
        }

        let noise = if params.temp_noise_sigma_c > 0.0 {
            Normal::new(0.0, params.temp_noise_sigma_c)
                .expect("sigma validated")
                .sample(rng)
        } else {
            0.0
        };
        self.temperature_c = params.diurnal_temperature(time_of_day_s) + self.heat_offset_c + noise;
        self.clamp();
    }

    /// Latch `production_lost` once DO has stayed under the threshold for the
    /// whole loss window. Returns true when the latch trips on this call.
    pub fn check_loss(&mut self, params: &FarmParams, now: SimTime) -> bool {
        if self.dissolved_oxygen_mgl < params.loss_threshold_mgl {
            let since = *self.do_below_since.get_or_insert(now);
            if !self.production_lost && now - since >= params.loss_window_s {
                self.production_lost = true;
                return true;
            }
        } else {
            self.do_below_since = None;
        }
        false
    }

    pub fn apply_command(&mut self, command: TankCommand) {
        match command {
            TankCommand::AerationOn => self.aeration_on = true,
            TankCommand::AerationOff => self.aeration_on = false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TankCommand {
    AerationOn,
    AerationOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    DoCrash,
    HeatSpike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    /// Seconds since the start of the run.
    pub at_s: f64,
    pub tank_id: String,
    pub kind: AnomalyKind,
    /// mg/L per hour for `do_crash`, degrees C for `heat_spike`.
    pub magnitude: f64,
    /// Active until the end of the run when absent.
    #[serde(default)]
    pub duration_s: Option<f64>,
}

impl AnomalyEvent {
    pub fn apply(&self, tank: &mut Tank) {
        match self.kind {
            AnomalyKind::DoCrash => tank.do_crash_mgl_per_h += self.magnitude,
            AnomalyKind::HeatSpike => tank.heat_offset_c += self.magnitude,
        }
    }

    pub fn clear(&self, tank: &mut Tank) {
        match self.kind {
            AnomalyKind::DoCrash => {
                tank.do_crash_mgl_per_h = (tank.do_crash_mgl_per_h - self.magnitude).max(0.0)
            }
            AnomalyKind::HeatSpike => tank.heat_offset_c -= self.magnitude,
        }
    }
}

/// All tanks of a scenario, keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Farm {
    pub params: FarmParams,
    pub tanks: BTreeMap<String, Tank>,
}

impl Farm {
    pub fn new(params: FarmParams, tanks: impl IntoIterator<Item = Tank>) -> Self {
        Self {
            params,
            tanks: tanks.into_iter().map(|t| (t.tank_id.clone(), t)).collect(),
        }
    }

    pub fn tank(&self, tank_id: &str) -> Result<&Tank, FarmError> {
        self.tanks
            .get(tank_id)
            .ok_or_else(|| FarmError::UnknownTank(tank_id.to_string()))
    }

    pub fn tank_mut(&mut self, tank_id: &str) -> Result<&mut Tank, FarmError> {
        self.tanks
            .get_mut(tank_id)
            .ok_or_else(|| FarmError::UnknownTank(tank_id.to_string()))
    }

    pub fn apply_command(&mut self, tank_id: &str, command: TankCommand) -> Result<(), FarmError> {
        self.tank_mut(tank_id)?.apply_command(command);
        Ok(())
    }

    /// Step every tank and run the loss check; returns ids of tanks whose loss
    /// latch tripped during this tick.
    pub fn tick<R: Rng + ?Sized>(&mut self, dt_s: f64, now: SimTime, time_of_day_s: f64, rng: &mut R) -> Vec<String> {
        let params = self.params;
        let mut tripped = Vec::new();
        for tank in self.tanks.values_mut() {
            tank.step(&params, dt_s, time_of_day_s, rng);
            if tank.check_loss(&params, now) {
                tripped.push(tank.tank_id.clone());
            }
        }
        tripped
    }
}
