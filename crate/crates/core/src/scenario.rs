//! Declarative scenario description and its validation.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

use crate::farm::{AnomalyEvent, FarmParams, Tank, DO_MAX_MGL, PH_MAX, TEMP_MAX_C};
use crate::frame::{SensorKind, HEADER_LEN, MAX_READINGS};
use crate::link::{
    airtime_s, default_obstruction_losses, fit_site_excess, DutyCyclePolicy, Obstruction,
    RadioConfig, SiteModel, SurveyPoint,
};
use crate::node::{ProfileSpec, SamplingConfig};
use crate::telemetry::CommandAction;

/// 2021-03-01T00:00:00Z
pub const DEFAULT_START_EPOCH_S: u32 = 1_614_556_800;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    fn field(path: impl Into<String>, message: impl ToString) -> Self {
        ScenarioError::Field {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            ScenarioError::Field { path, .. } => Some(path),
            ScenarioError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    /// Fitted from the survey's unobstructed measured points when absent.
    #[serde(default)]
    pub site_excess_db: Option<f64>,
    #[serde(default = "default_obstruction_losses")]
    pub obstruction_loss_db: BTreeMap<Obstruction, f64>,
}

impl Default for SiteConfig {
    fn default() -> Self {
        Self {
            site_excess_db: None,
            obstruction_loss_db: default_obstruction_losses(),
        }
    }
}

fn default_survey() -> Vec<SurveyPoint> {
    crate::survey::table1_points()
}

fn default_interval() -> f64 {
    600.0
}

fn default_profile() -> ProfileSpec {
    ProfileSpec::Named("prototype".into())
}

fn default_sensors() -> Vec<SensorKind> {
    vec![SensorKind::WaterTemperatureC]
}

fn default_epoch() -> u32 {
    DEFAULT_START_EPOCH_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub node_id: u32,
    pub tank_id: String,
    pub survey_label: String,
    #[serde(default = "default_profile")]
    pub profile: ProfileSpec,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    #[serde(default = "default_sensors")]
    pub sensors: Vec<SensorKind>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub first_wake_s: f64,
}

impl NodeConfig {
    pub fn frame_len(&self) -> usize {
        HEADER_LEN + 4 + 2 + 1 + 5 * self.sensors.len() + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub from_s: f64,
    pub to_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Uplink {
    Connected,
    ScheduledOutages { outages: Vec<Outage> },
}

impl Default for Uplink {
    fn default() -> Self {
        Uplink::Connected
    }
}

impl Uplink {
    /// Whether the backhaul is down at `t_s` seconds into the run.
    pub fn is_down(&self, t_s: f64) -> bool {
        match self {
            Uplink::Connected => false,
            Uplink::ScheduledOutages { outages } => {
                outages.iter().any(|o| o.from_s <= t_s && t_s < o.to_s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_gateway_id")]
    pub gateway_id: String,
    /// Receiver position; survey distances are measured to it.
    #[serde(default = "default_gateway_label")]
    pub label: String,
    #[serde(default)]
    pub uplink: Uplink,
}

fn default_gateway_id() -> String {
    "gw-1".into()
}

fn default_gateway_label() -> String {
    "RX".into()
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            gateway_id: default_gateway_id(),
            label: default_gateway_label(),
            uplink: Uplink::Connected,
        }
    }
}

/// Operator action scripted at a fixed run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledCommand {
    pub at_s: f64,
    pub tank_id: String,
    #[serde(flatten)]
    pub action: CommandAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_epoch")]
    pub start_epoch_s: u32,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub duty_cycle: DutyCyclePolicy,
    #[serde(default)]
    pub site: SiteConfig,
    #[serde(default = "default_survey")]
    pub survey: Vec<SurveyPoint>,
    #[serde(default)]
    pub farm: FarmParams,
    pub tanks: Vec<Tank>,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub anomalies: Vec<AnomalyEvent>,
    #[serde(default)]
    pub commands: Vec<ScheduledCommand>,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default)]
    pub gateway: GatewayConfig,
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::field(if path == "." { "$".to_string() } else { path }, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn survey_point(&self, label: &str) -> Option<&SurveyPoint> {
        self.survey.iter().find(|p| p.label == label)
    }

    pub fn site_model(&self) -> Result<SiteModel, ScenarioError> {
        let excess = match self.site.site_excess_db {
            Some(v) => v,
            None => fit_site_excess(&self.radio, &self.survey)
                .map_err(|e| ScenarioError::field("site.site_excess_db", e))?,
        };
        Ok(SiteModel {
            site_excess_db: excess,
            obstruction_loss_db: self.site.obstruction_loss_db.clone(),
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(ScenarioError::field("duration_s", "must be positive"));
        }
        self.radio
            .validate()
            .map_err(|e| ScenarioError::field("radio", e))?;
        self.duty_cycle
            .validate()
            .map_err(|e| ScenarioError::field("duty_cycle", e))?;
        self.farm
            .validate()
            .map_err(|e| ScenarioError::field("farm", e))?;
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(ScenarioError::field("loss_probability", "must be in [0, 1]"));
        }

        let mut labels = BTreeSet::new();
        for (i, p) in self.survey.iter().enumerate() {
            p.validate()
                .map_err(|e| ScenarioError::field(format!("survey[{i}]"), e))?;
            if !labels.insert(p.label.as_str()) {
                return Err(ScenarioError::field(
                    format!("survey[{i}].label"),
                    format!("duplicate label '{}'", p.label),
                ));
            }
        }
        self.site_model()?
            .validate()
            .map_err(|e| ScenarioError::field("site", e))?;

        let mut tank_ids = BTreeSet::new();
        for (i, t) in self.tanks.iter().enumerate() {
            if !tank_ids.insert(t.tank_id.as_str()) {
                return Err(ScenarioError::field(
                    format!("tanks[{i}].tank_id"),
                    format!("duplicate tank '{}'", t.tank_id),
                ));
            }
            if !(0.0..=DO_MAX_MGL).contains(&t.dissolved_oxygen_mgl) {
                return Err(ScenarioError::field(
                    format!("tanks[{i}].dissolved_oxygen_mgl"),
                    "must be in [0, 15]",
                ));
            }
            if !(0.0..=TEMP_MAX_C).contains(&t.temperature_c) {
                return Err(ScenarioError::field(
                    format!("tanks[{i}].temperature_c"),
                    "must be in [0, 45]",
                ));
            }
            if !(0.0..=PH_MAX).contains(&t.ph) {
                return Err(ScenarioError::field(format!("tanks[{i}].ph"), "must be in [0, 14]"));
            }
        }

        let mut node_ids = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let at = |f: &str| format!("nodes[{i}].{f}");
            if !node_ids.insert(n.node_id) {
                return Err(ScenarioError::field(at("node_id"), format!("duplicate node {}", n.node_id)));
            }
            if !tank_ids.contains(n.tank_id.as_str()) {
                return Err(ScenarioError::field(at("tank_id"), format!("unknown tank '{}'", n.tank_id)));
            }
            if !labels.contains(n.survey_label.as_str()) {
                return Err(ScenarioError::field(
                    at("survey_label"),
                    format!("unknown survey label '{}'", n.survey_label),
                ));
            }
            n.profile
                .resolve()
                .map_err(|e| ScenarioError::field(at("profile"), e))?;
            if n.sensors.is_empty() || n.sensors.len() > MAX_READINGS {
                return Err(ScenarioError::field(
                    at("sensors"),
                    format!("must list 1..={MAX_READINGS} sensors"),
                ));
            }
            if n.sensors.iter().collect::<BTreeSet<_>>().len() != n.sensors.len() {
                return Err(ScenarioError::field(at("sensors"), "duplicate sensor kind"));
            }
            if n.sampling.noise_sigma.values().any(|s| !(*s >= 0.0)) {
                return Err(ScenarioError::field(at("sampling.noise_sigma"), "must be >= 0"));
            }
            let airtime = airtime_s(&self.radio, n.frame_len());
            if !self.duty_cycle.permits_periodic(airtime, n.interval_s) {
                return Err(ScenarioError::field(
                    at("interval_s"),
                    format!(
                        "{} s violates the {}% duty cycle for {:.4} s airtime",
                        n.interval_s,
                        self.duty_cycle.cap_fraction * 100.0,
                        airtime
                    ),
                ));
            }
            if !(n.first_wake_s >= 0.0) {
                return Err(ScenarioError::field(at("first_wake_s"), "must be >= 0"));
            }
        }

        for (i, a) in self.anomalies.iter().enumerate() {
            if !tank_ids.contains(a.tank_id.as_str()) {
                return Err(ScenarioError::field(
                    format!("anomalies[{i}].tank_id"),
                    format!("unknown tank '{}'", a.tank_id),
                ));
            }
            if !(a.magnitude > 0.0) {
                return Err(ScenarioError::field(format!("anomalies[{i}].magnitude"), "must be > 0"));
            }
            if !(a.at_s >= 0.0) {
                return Err(ScenarioError::field(format!("anomalies[{i}].at_s"), "must be >= 0"));
            }
            if a.duration_s.is_some_and(|d| !(d > 0.0)) {
                return Err(ScenarioError::field(format!("anomalies[{i}].duration_s"), "must be > 0"));
            }
        }
        for (i, c) in self.commands.iter().enumerate() {
            if !tank_ids.contains(c.tank_id.as_str()) {
                return Err(ScenarioError::field(
                    format!("commands[{i}].tank_id"),
                    format!("unknown tank '{}'", c.tank_id),
                ));
            }
            if !(c.at_s >= 0.0) {
                return Err(ScenarioError::field(format!("commands[{i}].at_s"), "must be >= 0"));
            }
        }
        if let Uplink::ScheduledOutages { outages } = &self.gateway.uplink {
            for (i, o) in outages.iter().enumerate() {
                if !(o.from_s >= 0.0 && o.to_s > o.from_s) {
                    return Err(ScenarioError::field(
                        format!("gateway.uplink.outages[{i}]"),
                        "need 0 <= from_s < to_s",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Scenarios shipped with the crate, by name.
pub mod bundled {
    pub const POOL_66H: &str = include_str!("../scenarios/pool_66h.json");
    pub const FARM_SURVEY: &str = include_str!("../scenarios/farm_survey.json");
    pub const DO_CRASH: &str = include_str!("../scenarios/do_crash.json");
    pub const OUTAGE_1H: &str = include_str!("../scenarios/outage_1h.json");

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "pool_66h" => Some(POOL_66H),
            "farm_survey" => Some(FARM_SURVEY),
            "do_crash" => Some(DO_CRASH),
            "outage_1h" => Some(OUTAGE_1H),
            _ => None,
        }
    }

    pub const NAMES: [&str; 4] = ["pool_66h", "farm_survey", "do_crash", "outage_1h"];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load() {
        for name in bundled::NAMES {
            ScenarioConfig::from_json_str(bundled::by_name(name).unwrap())
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn default_site_is_fitted_from_table1() {
        let s = ScenarioConfig::from_json_str(bundled::POOL_66H).unwrap();
        let site = s.site_model().unwrap();
        assert!((site.site_excess_db - 63.512).abs() < 0.01);
    }

    #[test]
    fn type_error_reports_path() {
        let bad = bundled::POOL_66H.replacen("\"interval_s\": 600", "\"interval_s\": \"often\"", 1);
        let err = ScenarioConfig::from_json_str(&bad).unwrap_err();
        assert_eq!(err.path(), Some("nodes[0].interval_s"), "{err}");
    }

    #[test]
    fn unknown_label_reports_path() {
        let mut s = ScenarioConfig::from_json_str(bundled::POOL_66H).unwrap();
        s.nodes[0].survey_label = "Z".into();
        let err = s.validate().unwrap_err();
        assert_eq!(err.path(), Some("nodes[0].survey_label"));
    }

    #[test]
    fn duty_cycle_violation_rejected_at_load() {
        let mut s = ScenarioConfig::from_json_str(bundled::POOL_66H).unwrap();
        s.nodes[0].interval_s = 5.0;
        assert_eq!(s.validate().unwrap_err().path(), Some("nodes[0].interval_s"));
    }

    #[test]
    fn loss_probability_bounds() {
        let mut s = ScenarioConfig::from_json_str(bundled::POOL_66H).unwrap();
        s.loss_probability = 1.5;
        assert_eq!(s.validate().unwrap_err().path(), Some("loss_probability"));
    }

    #[test]
    fn uplink_outage_window() {
        let u = Uplink::ScheduledOutages {
            outages: vec![Outage { from_s: 10.0, to_s: 20.0 }],
        };
        assert!(!u.is_down(9.9));
        assert!(u.is_down(10.0));
        assert!(!u.is_down(20.0));
    }
}
