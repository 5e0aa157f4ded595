//! JSON documents exchanged between gateway and ingestion service, and
//! sequence-gap loss accounting.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::frame::SensorFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub series: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub gateway_id: String,
    pub node_id: u32,
    pub seq: u16,
    pub timestamp_s: u64,
    pub readings: Vec<SeriesValue>,
    pub battery_v: f64,
    pub rssi_dbm: f64,
    pub received_at_s: u64,
}

/// A schema violation with the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

pub fn is_valid_series_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl TelemetryRecord {
    pub fn from_frame(gateway_id: &str, frame: &SensorFrame, rssi_dbm: f64, received_at_s: u64) -> Self {
        Self {
            gateway_id: gateway_id.to_string(),
            node_id: frame.node_id,
            seq: frame.seq,
            timestamp_s: u64::from(frame.timestamp_s),
            readings: frame
                .readings
                .iter()
                .map(|r| SeriesValue {
                    series: r.kind.series_name().to_string(),
                    value: f64::from(r.value),
                })
                .collect(),
            battery_v: f64::from(frame.battery_mv) / 1000.0,
            rssi_dbm,
            received_at_s,
        }
    }

    pub fn idempotency_key(&self) -> String {
        idempotency_key(&self.gateway_id, self.node_id, self.seq)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.gateway_id.is_empty() {
            return Err(FieldError {
                path: "gateway_id".into(),
                message: "must not be empty".into(),
            });
        }
        if self.readings.is_empty() {
            return Err(FieldError {
                path: "readings".into(),
                message: "must contain at least one reading".into(),
            });
        }
        for (i, r) in self.readings.iter().enumerate() {
            if !is_valid_series_name(&r.series) {
                return Err(FieldError {
                    path: format!("readings[{i}].series"),
                    message: format!("'{}' does not match [a-z0-9_]+", r.series),
                });
            }
            if !r.value.is_finite() {
                return Err(FieldError {
                    path: format!("readings[{i}].value"),
                    message: "must be finite".into(),
                });
            }
        }
        if !(0.0..=6.0).contains(&self.battery_v) {
            return Err(FieldError {
                path: "battery_v".into(),
                message: format!("{} outside [0, 6]", self.battery_v),
            });
        }
        if !self.rssi_dbm.is_finite() {
            return Err(FieldError {
                path: "rssi_dbm".into(),
                message: "must be finite".into(),
            });
        }
        Ok(())
    }
}

pub fn idempotency_key(gateway_id: &str, node_id: u32, seq: u16) -> String {
    format!("{gateway_id}:{node_id}:{seq}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CommandAction {
    AerationOn,
    AerationOff,
    SetIntervalS { interval_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandState {
    Pending,
    Delivered,
    Acked,
}

/// Operator intervention routed through the service to a gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub command_id: u64,
    pub gateway_id: String,
    pub tank_id: String,
    #[serde(flatten)]
    pub action: CommandAction,
    pub issued_by: String,
    pub issued_at: u64,
    pub state: CommandState,
}

/// What reaches the simulation engine: a tank-level actuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankDirective {
    pub tank_id: String,
    #[serde(flatten)]
    pub action: CommandAction,
}

impl From<&Command> for TankDirective {
    fn from(c: &Command) -> Self {
        Self {
            tank_id: c.tank_id.clone(),
            action: c.action,
        }
    }
}

/// Per-node loss estimate from sequence numbers seen at the receiver.
///
/// Nodes start counting at seq 0, so the expected count is the highest
/// unwrapped seq + 1. Frames lost after the last delivery are invisible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeqGapTracker {
    nodes: BTreeMap<u32, SeqState>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SeqState {
    last_raw: u16,
    wraps: u64,
    highest: u64,
    received: u64,
}

impl SeqGapTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, node_id: u32, seq: u16) {
        let st = self.nodes.entry(node_id).or_insert(SeqState {
            last_raw: seq,
            wraps: 0,
            highest: u64::from(seq),
            received: 0,
        });
        if st.received > 0 && seq < st.last_raw && st.last_raw - seq > u16::MAX / 2 {
            st.wraps += 1;
        }
        st.last_raw = seq;
        let unwrapped = st.wraps * (u64::from(u16::MAX) + 1) + u64::from(seq);
        st.highest = st.highest.max(unwrapped);
        st.received += 1;
    }

    pub fn expected(&self, node_id: u32) -> u64 {
        self.nodes.get(&node_id).map_or(0, |s| s.highest + 1)
    }

    pub fn received(&self, node_id: u32) -> u64 {
        self.nodes.get(&node_id).map_or(0, |s| s.received)
    }

    pub fn lost(&self, node_id: u32) -> u64 {
        self.expected(node_id).saturating_sub(self.received(node_id))
    }

    pub fn loss_rate(&self, node_id: u32) -> f64 {
        let expected = self.expected(node_id);
        if expected == 0 {
            0.0
        } else {
            self.lost(node_id) as f64 / expected as f64
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.keys().copied()
    }

    pub fn total_expected(&self) -> u64 {
        self.nodes.keys().map(|&n| self.expected(n)).sum()
    }

    pub fn total_lost(&self) -> u64 {
        self.nodes.keys().map(|&n| self.lost(n)).sum()
    }
}
