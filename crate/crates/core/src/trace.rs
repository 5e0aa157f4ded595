//! Event trace (newline-delimited JSON) and the metrics derived from it.
//!
//! Run metrics are computed only from trace records, so replaying a trace
//! reproduces them exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::BufRead;
use thiserror::Error;

use crate::telemetry::SeqGapTracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Start,
    Tx,
    Death,
    AnomalyStart,
    AnomalyEnd,
    Command,
    ProductionLost,
    End,
}

pub mod outcome {
    pub const DELIVERED: &str = "delivered";
    pub const LOST_RSSI: &str = "lost_rssi";
    pub const LOST_RANDOM: &str = "lost_random";
    pub const APPLIED: &str = "applied";
    pub const REJECTED: &str = "rejected";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub duration_s: f64,
    pub nodes: Vec<u32>,
    pub tanks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Seconds since the start of the run.
    pub t: f64,
    pub kind: TraceKind,
    pub node_id: Option<u32>,
    pub seq: Option<u16>,
    pub rssi_dbm: Option<f64>,
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tank_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
}

impl TraceRecord {
    pub fn new(t: f64, kind: TraceKind) -> Self {
        Self {
            t,
            kind,
            node_id: None,
            seq: None,
            rssi_dbm: None,
            outcome: None,
            tank_id: None,
            detail: None,
            run: None,
        }
    }

    pub fn node(mut self, node_id: u32) -> Self {
        self.node_id = Some(node_id);
        self
    }

    pub fn tank(mut self, tank_id: &str) -> Self {
        self.tank_id = Some(tank_id.to_string());
        self
    }

    pub fn outcome(mut self, outcome: &str) -> Self {
        self.outcome = Some(outcome.to_string());
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub sent: u64,
    pub received: u64,
    pub lost_rssi: u64,
    pub lost_random: u64,
    /// Loss estimated from sequence gaps among delivered frames.
    pub seq_gap_loss_rate: f64,
    /// Seconds from run start to battery exhaustion; `None` if alive at the end.
    pub lifetime_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub duration_s: f64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub frames_lost_rssi: u64,
    pub frames_lost_random: u64,
    pub seq_gap_loss_rate: f64,
    pub nodes: BTreeMap<u32, NodeMetrics>,
    pub production_lost: BTreeMap<String, bool>,
}

impl RunMetrics {
    pub fn is_conserved(&self) -> bool {
        let per_node = self
            .nodes
            .values()
            .all(|n| n.sent == n.received + n.lost_rssi + n.lost_random);
        per_node
            && self.frames_sent
                == self.frames_received + self.frames_lost_rssi + self.frames_lost_random
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("trace does not begin with a start record")]
    MissingStart,
    #[error("trace is truncated: no end record")]
    Truncated,
    #[error("line {line}: record after end")]
    AfterEnd { line: usize },
    #[error("line {line}: time goes backwards ({t} < {prev})")]
    OutOfOrder { line: usize, t: f64, prev: f64 },
    #[error("line {line}: node {node_id} not declared in start record")]
    UnknownNode { line: usize, node_id: u32 },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// Incremental trace consumer producing [`RunMetrics`].
#[derive(Debug, Default)]
pub struct MetricsAccumulator {
    metrics: RunMetrics,
    gaps: SeqGapTracker,
    started: bool,
    ended: bool,
    last_t: f64,
    line: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rec: &TraceRecord) -> Result<(), ReplayError> {
        self.line += 1;
        let line = self.line;
        if self.ended {
            return Err(ReplayError::AfterEnd { line });
        }
        if !self.started {
            let Some(run) = rec.run.as_ref().filter(|_| rec.kind == TraceKind::Start) else {
                return Err(ReplayError::MissingStart);
            };
            self.started = true;
            self.metrics.seed = run.seed;
            self.metrics.duration_s = run.duration_s;
            for &n in &run.nodes {
                self.metrics.nodes.insert(n, NodeMetrics::default());
            }
            for t in &run.tanks {
                self.metrics.production_lost.insert(t.clone(), false);
            }
            self.last_t = rec.t;
            return Ok(());
        }
        if rec.t < self.last_t {
            return Err(ReplayError::OutOfOrder {
                line,
                t: rec.t,
                prev: self.last_t,
            });
        }
        self.last_t = rec.t;

        match rec.kind {
            TraceKind::Start => {
                return Err(ReplayError::Invalid {
                    line,
                    message: "duplicate start record".into(),
                })
            }
            TraceKind::Tx => {
                let result = match rec.outcome.as_deref() {
                    Some(o @ (outcome::DELIVERED | outcome::LOST_RSSI | outcome::LOST_RANDOM)) => o,
                    other => {
                        return Err(ReplayError::Invalid {
                            line,
                            message: format!("unknown tx outcome {other:?}"),
                        })
                    }
                };
                let delivered_seq = if result == outcome::DELIVERED {
                    Some(rec.seq.ok_or_else(|| ReplayError::Invalid {
                        line,
                        message: "delivered frame without seq".into(),
                    })?)
                } else {
                    None
                };
                let node = node_entry(&mut self.metrics, rec, line)?;
                node.sent += 1;
                match result {
                    outcome::DELIVERED => node.received += 1,
                    outcome::LOST_RSSI => node.lost_rssi += 1,
                    _ => node.lost_random += 1,
                }
                self.metrics.frames_sent += 1;
                match result {
                    outcome::DELIVERED => self.metrics.frames_received += 1,
                    outcome::LOST_RSSI => self.metrics.frames_lost_rssi += 1,
                    _ => self.metrics.frames_lost_random += 1,
                }
                if let (Some(seq), Some(id)) = (delivered_seq, rec.node_id) {
                    self.gaps.observe(id, seq);
                }
            }
            TraceKind::Death => {
                node_entry(&mut self.metrics, rec, line)?.lifetime_s = Some(rec.t);
            }
            TraceKind::ProductionLost => {
                let tank = rec.tank_id.clone().ok_or_else(|| ReplayError::Invalid {
                    line,
                    message: "production_lost without tank_id".into(),
                })?;
                self.metrics.production_lost.insert(tank, true);
            }
            TraceKind::AnomalyStart | TraceKind::AnomalyEnd | TraceKind::Command => {}
            TraceKind::End => self.ended = true,
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunMetrics, ReplayError> {
        if !self.started {
            return Err(ReplayError::MissingStart);
        }
        if !self.ended {
            return Err(ReplayError::Truncated);
        }
        for (id, node) in self.metrics.nodes.iter_mut() {
            node.seq_gap_loss_rate = self.gaps.loss_rate(*id);
        }
        let expected = self.gaps.total_expected();
        self.metrics.seq_gap_loss_rate = if expected == 0 {
            0.0
        } else {
            self.gaps.total_lost() as f64 / expected as f64
        };
        Ok(self.metrics)
    }
}

fn node_entry<'a>(
    m: &'a mut RunMetrics,
    rec: &TraceRecord,
    line: usize,
) -> Result<&'a mut NodeMetrics, ReplayError> {
    let node_id = rec.node_id.ok_or_else(|| ReplayError::Invalid {
        line,
        message: "missing node_id".into(),
    })?;
    m.nodes
        .get_mut(&node_id)
        .ok_or(ReplayError::UnknownNode { line, node_id })
}

pub fn to_ndjson(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
        out.push('\n');
    }
    out
}

/// SHA-256 of the NDJSON encoding, hex.
pub fn trace_hash(records: &[TraceRecord]) -> String {
    hex::encode(Sha256::digest(to_ndjson(records).as_bytes()))
}

pub fn parse_ndjson<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| ReplayError::Corrupt {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| ReplayError::Corrupt {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn replay(records: &[TraceRecord]) -> Result<RunMetrics, ReplayError> {
    let mut acc = MetricsAccumulator::new();
    for r in records {
        acc.observe(r)?;
    }
    acc.finish()
}

pub fn replay_ndjson<R: BufRead>(reader: R) -> Result<RunMetrics, ReplayError> {
    replay(&parse_ndjson(reader)?)
}
