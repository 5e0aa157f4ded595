//! Threshold alerts over stored readings.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::store::{anchored, StoredReading};

/// Time an operator has to react to a dissolved-oxygen breach.
pub const DO_RESPONSE_DEADLINE_S: u64 = 30 * 60;
pub const DO_SERIES: &str = "dissolved_oxygen_mgl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Self::Lt => value < threshold,
            Self::Le => value <= threshold,
            Self::Gt => value > threshold,
            Self::Ge => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub name: String,
    pub series_pattern: String,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default)]
    pub duration_s: u64,
}

impl AlertRule {
    pub fn default_rules() -> Vec<AlertRule> {
        vec![AlertRule {
            name: "low_dissolved_oxygen".into(),
            series_pattern: DO_SERIES.into(),
            comparator: Comparator::Lt,
            threshold: 3.0,
            duration_s: 0,
        }]
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub rule: AlertRule,
    regex: Regex,
}

impl CompiledRule {
    pub fn compile(rule: AlertRule) -> Result<Self, regex::Error> {
        Ok(Self {
            regex: anchored(&rule.series_pattern)?,
            rule,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub rule: String,
    pub series: String,
    pub node_id: u32,
    pub tank_id: Option<String>,
    pub first_breach_s: u64,
    pub latest_s: u64,
    pub latest_value: f64,
    pub threshold: f64,
    /// Seconds left before production loss, for oxygen rules; floored at 0.
    pub deadline_remaining_s: Option<u64>,
}

/// A rule fires for a (node, series) when its most recent readings have all
/// breached the threshold over a span of at least `duration_s`.
pub fn evaluate(rules: &[CompiledRule], rows: &[StoredReading], now: u64) -> Vec<Alert> {
    let mut streams: BTreeMap<(u32, &str), Vec<&StoredReading>> = BTreeMap::new();
    for r in rows {
        streams.entry((r.node_id, r.series.as_str())).or_default().push(r);
    }
    let mut out = Vec::new();
    for rule in rules {
        for ((node_id, series), readings) in streams.iter_mut() {
            if !rule.regex.is_match(series) {
                continue;
            }
            readings.sort_by_key(|r| (r.timestamp_s, r.seq, r.id));
            let run: Vec<&&StoredReading> = readings
                .iter()
                .rev()
                .take_while(|r| rule.rule.comparator.holds(r.value, rule.rule.threshold))
                .collect();
            let (Some(latest), Some(first)) = (run.first(), run.last()) else {
                continue;
            };
            if latest.timestamp_s - first.timestamp_s < rule.rule.duration_s {
                continue;
            }
            let deadline_remaining_s = (*series == DO_SERIES)
                .then(|| DO_RESPONSE_DEADLINE_S.saturating_sub(now.saturating_sub(first.timestamp_s)));
            out.push(Alert {
                rule: rule.rule.name.clone(),
                series: series.to_string(),
                node_id: *node_id,
                tank_id: latest.tank_id.clone(),
                first_breach_s: first.timestamp_s,
                latest_s: latest.timestamp_s,
                latest_value: latest.value,
                threshold: rule.rule.threshold,
                deadline_remaining_s,
            });
        }
    }
    out
}
