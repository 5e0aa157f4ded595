//! Embedded document store for telemetry.
//!
//! Each accepted record is one JSON line in `readings.ndjson`. The in-memory
//! view holds one row per reading. A torn final line from a crash is dropped
//! on reopen; duplicate keys in the file are ignored.

use aquagreen_core::telemetry::TelemetryRecord;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_QUERY_LIMIT: usize = 1000;
pub const MAX_QUERY_LIMIT: usize = 100_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("store file {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One record as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub id: u64,
    pub tank_id: Option<String>,
    pub ingested_at_s: u64,
    pub record: TelemetryRecord,
}

/// One reading as served by queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReading {
    pub id: u64,
    pub record_id: u64,
    pub series: String,
    pub node_id: u32,
    pub tank_id: Option<String>,
    pub value: f64,
    pub timestamp_s: u64,
    pub battery_v: f64,
    pub rssi_dbm: f64,
    pub gateway_id: String,
    pub seq: u16,
    /// Record key plus series, unique per row.
    pub idempotency_key: String,
    pub received_at_s: u64,
    pub ingested_at_s: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Created(u64),
    Duplicate(u64),
}

impl IngestOutcome {
    pub fn id(self) -> u64 {
        match self {
            Self::Created(id) | Self::Duplicate(id) => id,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReadingQuery {
    pub pattern: Option<Regex>,
    pub node_id: Option<u32>,
    pub from_s: Option<u64>,
    pub to_s: Option<u64>,
    pub limit: usize,
}

/// Full-match regex: the pattern must cover the whole series name.
pub fn anchored(pattern: &str) -> Result<Regex, regex::Error> {
    Regex::new(&format!("^(?:{pattern})$"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series: String,
    pub count: usize,
    pub first_timestamp_s: u64,
    pub last_timestamp_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: u32,
    pub tank_id: Option<String>,
    pub gateway_id: String,
    pub last_seq: u16,
    pub last_timestamp_s: u64,
    pub battery_v: f64,
    pub rssi_dbm: f64,
    pub records: usize,
    pub latest: BTreeMap<String, f64>,
}

#[derive(Debug, Default)]
pub struct Store {
    docs: Vec<StoredDocument>,
    rows: Vec<StoredReading>,
    by_key: HashMap<String, u64>,
    file: Option<File>,
    next_row_id: u64,
}

fn rows_for(doc: &StoredDocument, first_row_id: u64) -> Vec<StoredReading> {
    let key = doc.record.idempotency_key();
    doc.record
        .readings
        .iter()
        .enumerate()
        .map(|(i, r)| StoredReading {
            id: first_row_id + i as u64,
            record_id: doc.id,
            series: r.series.clone(),
            node_id: doc.record.node_id,
            tank_id: doc.tank_id.clone(),
            value: r.value,
            timestamp_s: doc.record.timestamp_s,
            battery_v: doc.record.battery_v,
            rssi_dbm: doc.record.rssi_dbm,
            gateway_id: doc.record.gateway_id.clone(),
            seq: doc.record.seq,
            idempotency_key: format!("{key}:{}", r.series),
            received_at_s: doc.record.received_at_s,
            ingested_at_s: doc.ingested_at_s,
        })
        .collect()
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (creating if needed) a directory-backed store.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let path = dir.join("readings.ndjson");
        let mut store = Self::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let n = lines.len();
            let mut valid_len = 0u64;
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<StoredDocument>(line) {
                    Ok(doc) => {
                        valid_len += line.len() as u64 + 1;
                        store.insert_loaded(doc);
                    }
                    Err(_) if i + 1 == n => break,
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            path,
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(valid_len.min(f.metadata()?.len()))?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.flush()?;
        store.file = Some(file);
        Ok(store)
    }

    fn insert_loaded(&mut self, doc: StoredDocument) {
        let key = doc.record.idempotency_key();
        if self.by_key.contains_key(&key) {
            return;
        }
        self.by_key.insert(key, doc.id);
        let rows = rows_for(&doc, self.next_row_id);
        self.next_row_id += rows.len() as u64;
        self.rows.extend(rows);
        self.docs.push(doc);
    }

    pub fn ingest(
        &mut self,
        record: TelemetryRecord,
        tank_id: Option<String>,
        now_s: u64,
    ) -> Result<IngestOutcome, StoreError> {
        let key = record.idempotency_key();
        if let Some(&id) = self.by_key.get(&key) {
            return Ok(IngestOutcome::Duplicate(id));
        }
        let doc = StoredDocument {
            id: self.docs.last().map_or(1, |d| d.id + 1),
            tank_id,
            ingested_at_s: now_s,
            record,
        };
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&doc).expect("document serializes");
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        let id = doc.id;
        self.insert_loaded(doc);
        Ok(IngestOutcome::Created(id))
    }

    pub fn record_count(&self) -> usize {
        self.docs.len()
    }

    pub fn reading_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[StoredReading] {
        &self.rows
    }

    pub fn documents(&self) -> &[StoredDocument] {
        &self.docs
    }

    /// Matching rows ordered by (timestamp, id), at most `q.limit`.
    pub fn query(&self, q: &ReadingQuery) -> Vec<StoredReading> {
        let mut hits: Vec<&StoredReading> = self
            .rows
            .iter()
            .filter(|r| q.pattern.as_ref().is_none_or(|p| p.is_match(&r.series)))
            .filter(|r| q.node_id.is_none_or(|n| n == r.node_id))
            .filter(|r| q.from_s.is_none_or(|f| r.timestamp_s >= f))
            .filter(|r| q.to_s.is_none_or(|t| r.timestamp_s < t))
            .collect();
        hits.sort_by_key(|r| (r.timestamp_s, r.id));
        hits.into_iter().take(q.limit).cloned().collect()
    }

    pub fn series(&self) -> Vec<SeriesSummary> {
        let mut out: BTreeMap<&str, SeriesSummary> = BTreeMap::new();
        for r in &self.rows {
            let e = out.entry(&r.series).or_insert_with(|| SeriesSummary {
                series: r.series.clone(),
                count: 0,
                first_timestamp_s: r.timestamp_s,
                last_timestamp_s: r.timestamp_s,
            });
            e.count += 1;
            e.first_timestamp_s = e.first_timestamp_s.min(r.timestamp_s);
            e.last_timestamp_s = e.last_timestamp_s.max(r.timestamp_s);
        }
        out.into_values().collect()
    }

    /// Latest record per node, by sensor timestamp then seq.
    pub fn nodes(&self) -> Vec<NodeSummary> {
        let mut latest: BTreeMap<u32, (&StoredDocument, usize)> = BTreeMap::new();
        for d in &self.docs {
            let e = latest.entry(d.record.node_id).or_insert((d, 0));
            e.1 += 1;
            if (d.record.timestamp_s, d.record.seq) > (e.0.record.timestamp_s, e.0.record.seq) {
                e.0 = d;
            }
        }
        latest
            .into_values()
            .map(|(d, records)| NodeSummary {
                node_id: d.record.node_id,
                tank_id: d.tank_id.clone(),
                gateway_id: d.record.gateway_id.clone(),
                last_seq: d.record.seq,
                last_timestamp_s: d.record.timestamp_s,
                battery_v: d.record.battery_v,
                rssi_dbm: d.record.rssi_dbm,
                records,
                latest: d
                    .record
                    .readings
                    .iter()
                    .map(|r| (r.series.clone(), r.value))
                    .collect(),
            })
            .collect()
    }
}
