//! Browser bindings for three interactive views: link budget against
//! distance, airtime and battery budget, and a dissolved-oxygen crash with
//! optional aeration.
//!
//! Each export takes and returns a JSON string so the page needs no glue
//! beyond `JSON.parse`. The plain `*_json` functions are the same logic
//! without the wasm boundary, for native tests.

use aquagreen_core::engine::{Engine, RunHooks};
use aquagreen_core::farm::Farm;
use aquagreen_core::link::{
    airtime_s, default_obstruction_losses, free_space_loss, max_window_airtime_s, min_interval_s,
    DutyCyclePolicy, Obstruction, RadioConfig, SiteModel,
};
use aquagreen_core::node::PowerProfile;
use aquagreen_core::scenario::{bundled, ScenarioConfig};
use aquagreen_core::survey::{table1_points, SurveyReport};
use aquagreen_core::time::SimTime;
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn parse<T: for<'de> Deserialize<'de>>(input: &str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))
}

fn to_string(v: Result<serde_json::Value, String>) -> String {
    match v {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

// ---- link budget ----

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct LinkInput {
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
    /// `None` fits the excess to the bundled field survey.
    pub site_excess_db: Option<f64>,
    pub max_distance_m: f64,
}

impl Default for LinkInput {
    fn default() -> Self {
        let r = RadioConfig::default();
        Self {
            tx_power_dbm: r.tx_power_dbm,
            sensitivity_dbm: r.rx_sensitivity_dbm,
            site_excess_db: None,
            max_distance_m: 200.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    distance_m: f64,
    free_space_dbm: f64,
    open_dbm: f64,
    obstructed_dbm: f64,
}

pub fn link_budget_json(input: &str) -> Result<serde_json::Value, String> {
    let i: LinkInput = parse(input)?;
    if !(i.max_distance_m > 1.0 && i.max_distance_m <= 100_000.0) {
        return Err("max_distance_m must be in (1, 100000]".into());
    }
    let mut radio = RadioConfig::default();
    radio.tx_power_dbm = i.tx_power_dbm;
    radio.rx_sensitivity_dbm = i.sensitivity_dbm;
    let report = SurveyReport::build(&radio, &default_obstruction_losses(), i.site_excess_db, &table1_points())
        .map_err(|e| e.to_string())?;
    let site: &SiteModel = &report.site;
    let gain = radio.link_budget_gain_db();
    let obstructed = site.obstruction_loss(Obstruction::Forest);
    let steps = 200;
    let curve: Vec<CurvePoint> = (1..=steps)
        .map(|k| {
            let d = i.max_distance_m * k as f64 / steps as f64;
            let fs = gain - free_space_loss(d / 1000.0, radio.frequency_mhz).unwrap_or(f64::INFINITY);
            CurvePoint {
                distance_m: d,
                free_space_dbm: fs,
                open_dbm: fs - site.site_excess_db,
                obstructed_dbm: fs - site.site_excess_db - obstructed,
            }
        })
        .collect();
    // Distance where the open-path prediction meets the sensitivity: solve the log-distance law.
    let margin = gain - site.site_excess_db - radio.rx_sensitivity_dbm - 32.45 - 20.0 * radio.frequency_mhz.log10();
    let range_open_m = 10f64.powf(margin / 20.0) * 1000.0;
    let range_obstructed_m = 10f64.powf((margin - obstructed) / 20.0) * 1000.0;
    Ok(json!({
        "site_excess_db": site.site_excess_db,
        "sensitivity_dbm": radio.rx_sensitivity_dbm,
        "range_open_m": range_open_m,
        "range_obstructed_m": range_obstructed_m,
        "points": report.rows,
        "curve": curve,
    }))
}

#[wasm_bindgen]
pub fn link_budget(input: &str) -> String {
    to_string(link_budget_json(input))
}

// ---- airtime and battery ----

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct BudgetInput {
    pub spreading_factor: u8,
    pub frame_bytes: usize,
    pub interval_s: f64,
}

impl Default for BudgetInput {
    fn default() -> Self {
        Self {
            spreading_factor: 7,
            frame_bytes: 29,
            interval_s: 600.0,
        }
    }
}

pub fn budget_json(input: &str) -> Result<serde_json::Value, String> {
    let i: BudgetInput = parse(input)?;
    let mut radio = RadioConfig::default();
    radio.spreading_factor = i.spreading_factor;
    radio.validate().map_err(|e| e.to_string())?;
    if !(1..=255).contains(&i.frame_bytes) {
        return Err("frame_bytes must be 1..=255".into());
    }
    if !(i.interval_s > 0.0 && i.interval_s.is_finite()) {
        return Err("interval_s must be positive".into());
    }
    let policy = DutyCyclePolicy::default();
    let air = airtime_s(&radio, i.frame_bytes);
    let profiles: Vec<_> = [PowerProfile::prototype(), PowerProfile::optimized()]
        .into_iter()
        .map(|p| {
            json!({
                "name": p.name,
                "average_current_ma": p.average_current_a(i.interval_s) * 1000.0,
                "lifetime_h": p.lifetime_s(i.interval_s) / 3600.0,
            })
        })
        .collect();
    Ok(json!({
        "airtime_s": air,
        "min_interval_s": min_interval_s(air, &policy),
        "window_airtime_s": max_window_airtime_s(air, i.interval_s, policy.window_s),
        "window_budget_s": policy.cap_fraction * policy.window_s,
        "permitted": policy.permits_periodic(air, i.interval_s),
        "low_data_rate_optimize": radio.low_data_rate_optimize(),
        "profiles": profiles,
    }))
}

#[wasm_bindgen]
pub fn budget(input: &str) -> String {
    to_string(budget_json(input))
}

// ---- dissolved-oxygen crash ----

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct CrashInput {
    /// Oxygen demand added by the crash, mg/L per hour.
    pub magnitude: f64,
    /// Seconds after the crash starts to switch aeration on; `None` never does.
    pub aeration_after_s: Option<f64>,
    pub duration_s: f64,
}

impl Default for CrashInput {
    fn default() -> Self {
        Self {
            magnitude: 5.0,
            aeration_after_s: None,
            duration_s: 21_600.0,
        }
    }
}

struct Sampler {
    tank: String,
    every_s: f64,
    next_s: f64,
    series: Vec<(f64, f64, bool)>,
}

impl RunHooks for Sampler {
    fn on_tick(&mut self, at: SimTime, farm: &Farm) {
        let t = at.as_secs_f64();
        if t + 1e-9 < self.next_s {
            return;
        }
        self.next_s = t + self.every_s;
        if let Ok(tank) = farm.tank(&self.tank) {
            self.series.push((t, tank.dissolved_oxygen_mgl, tank.aeration_on));
        }
    }
}

pub fn do_crash_json(input: &str) -> Result<serde_json::Value, String> {
    let i: CrashInput = parse(input)?;
    if !(i.magnitude >= 0.0 && i.magnitude <= 50.0) {
        return Err("magnitude must be in [0, 50] mg/L/h".into());
    }
    if !(i.duration_s >= 3600.0 && i.duration_s <= 7.0 * 86_400.0) {
        return Err("duration_s must be between 1 h and 7 days".into());
    }
    let mut v: serde_json::Value =
        serde_json::from_str(bundled::DO_CRASH).map_err(|e| e.to_string())?;
    v["duration_s"] = json!(i.duration_s);
    v["anomalies"][0]["magnitude"] = json!(i.magnitude);
    let crash_at = v["anomalies"][0]["at_s"].as_f64().unwrap_or(3600.0);
    let tank = v["anomalies"][0]["tank_id"].as_str().unwrap_or("tank-1").to_string();
    if let Some(after) = i.aeration_after_s {
        if !(after >= 0.0) {
            return Err("aeration_after_s must be non-negative".into());
        }
        v["commands"] = json!([{"at_s": crash_at + after, "tank_id": tank, "action": "aeration_on"}]);
    }
    let scenario = ScenarioConfig::from_json_str(&v.to_string()).map_err(|e| e.to_string())?;
    let threshold = scenario.farm.loss_threshold_mgl;
    let window = scenario.farm.loss_window_s;
    let mut sampler = Sampler {
        tank: tank.clone(),
        every_s: 60.0,
        next_s: 0.0,
        series: Vec::new(),
    };
    let out = Engine::new(scenario).map_err(|e| e.to_string())?.run_with(&mut sampler);
    let lost = out.metrics.production_lost.get(&tank).copied().unwrap_or(false);
    let series: Vec<_> = sampler
        .series
        .iter()
        .map(|(t, d, a)| json!({"t_s": t, "do_mgl": d, "aeration": a}))
        .collect();
    Ok(json!({
        "crash_at_s": crash_at,
        "loss_threshold_mgl": threshold,
        "loss_window_s": window,
        "production_lost": lost,
        "series": series,
    }))
}

#[wasm_bindgen]
pub fn do_crash(input: &str) -> String {
    to_string(do_crash_json(input))
}
