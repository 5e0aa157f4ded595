//! Frame intake, uplink with delay-tolerant fallback, and command polling.

use aquagreen_core::frame::decode;
use aquagreen_core::telemetry::{Command, TelemetryRecord};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;
use tracing::{debug, warn};

use crate::buffer::{BufferError, DtnBuffer};
use crate::client::{AckStatus, ClientError, PostStatus, ServiceClient};

#[derive(Debug, Error)]
pub enum RelayError {
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "reason")]
pub enum RelayOutcome {
    Posted,
    Buffered,
    /// The frame failed to decode; carries the decode error kind.
    Rejected(&'static str),
    /// The same record is already waiting in the buffer.
    Duplicate,
    /// The service refused the record outright (4xx other than 401).
    Refused,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RelayStats {
    pub decoded: u64,
    /// Records the service confirmed, directly or by flush.
    pub posted: u64,
    pub posted_direct: u64,
    pub flushed: u64,
    pub buffered_total: u64,
    pub duplicates: u64,
    pub refused: u64,
    pub rejected: BTreeMap<String, u64>,
    pub token_refreshes: u64,
    pub commands_forwarded: u64,
}

pub struct Relay<C> {
    gateway_id: String,
    client: C,
    token: Option<String>,
    buffer: DtnBuffer,
    stats: RelayStats,
    forwarded: BTreeSet<u64>,
}

impl<C: ServiceClient> Relay<C> {
    pub fn new(gateway_id: impl Into<String>, client: C, buffer: DtnBuffer) -> Self {
        Self {
            gateway_id: gateway_id.into(),
            client,
            token: None,
            buffer,
            stats: RelayStats::default(),
            forwarded: BTreeSet::new(),
        }
    }

    pub fn gateway_id(&self) -> &str {
        &self.gateway_id
    }

    pub fn stats(&self) -> &RelayStats {
        &self.stats
    }

    pub fn buffer(&self) -> &DtnBuffer {
        &self.buffer
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn client_mut(&mut self) -> &mut C {
        &mut self.client
    }

    /// decoded = posted + buffered + duplicates + refused, counting only
    /// records handled by this process.
    pub fn is_conserved(&self, buffered_at_start: usize) -> bool {
        let s = &self.stats;
        s.decoded + buffered_at_start as u64
            == s.posted + self.buffer.len() as u64 + s.duplicates + s.refused
    }

    fn token(&mut self) -> Result<String, ClientError> {
        if let Some(t) = &self.token {
            return Ok(t.clone());
        }
        // A refused login (bad password, throttled) says nothing about the
        // record itself, so treat it as an auth failure and keep the record.
        let t = self.client.login().map_err(|e| match e {
            ClientError::Refused { status, .. } => {
                warn!(status, "login refused");
                ClientError::Unauthorized
            }
            other => other,
        })?;
        self.token = Some(t.clone());
        Ok(t)
    }

    /// Run `op` with a token, refreshing it once on 401.
    fn authed<T>(
        &mut self,
        mut op: impl FnMut(&mut C, &str) -> Result<T, ClientError>,
    ) -> Result<T, ClientError> {
        let token = self.token()?;
        match op(&mut self.client, &token) {
            Err(ClientError::Unauthorized) => {
                self.token = None;
                self.stats.token_refreshes += 1;
                let token = self.token()?;
                op(&mut self.client, &token)
            }
            other => other,
        }
    }

    fn post(&mut self, record: &TelemetryRecord) -> Result<PostStatus, ClientError> {
        self.authed(|c, t| c.post_record(t, record))
    }

    /// Handle one received radio frame.
    pub fn relay(&mut self, frame: &[u8], rssi_dbm: f64, now_s: u64) -> Result<RelayOutcome, RelayError> {
        let decoded = match decode(frame) {
            Ok(f) => f,
            Err(e) => {
                *self.stats.rejected.entry(e.kind().to_string()).or_default() += 1;
                debug!(kind = e.kind(), "rejected frame");
                return Ok(RelayOutcome::Rejected(e.kind()));
            }
        };
        self.stats.decoded += 1;
        let record = TelemetryRecord::from_frame(&self.gateway_id, &decoded, rssi_dbm, now_s);

        // keep arrival order: anything already queued goes first
        if !self.buffer.is_empty() {
            self.flush()?;
        }
        if !self.buffer.is_empty() {
            return self.enqueue(record);
        }
        match self.post(&record) {
            Ok(_) => {
                self.stats.posted += 1;
                self.stats.posted_direct += 1;
                Ok(RelayOutcome::Posted)
            }
            Err(e) if e.is_transient() || e == ClientError::Unauthorized => {
                debug!(error = %e, "uplink failed; buffering");
                self.enqueue(record)
            }
            Err(e) => {
                warn!(error = %e, node = record.node_id, seq = record.seq, "service refused record");
                self.stats.refused += 1;
                Ok(RelayOutcome::Refused)
            }
        }
    }

    fn enqueue(&mut self, record: TelemetryRecord) -> Result<RelayOutcome, RelayError> {
        if self.buffer.push(record)? {
            self.stats.buffered_total += 1;
            Ok(RelayOutcome::Buffered)
        } else {
            self.stats.duplicates += 1;
            Ok(RelayOutcome::Duplicate)
        }
    }

    /// Forward buffered records oldest-first until empty or the uplink fails.
    pub fn flush(&mut self) -> Result<usize, RelayError> {
        self.flush_at_most(usize::MAX)
    }

    pub fn flush_at_most(&mut self, max: usize) -> Result<usize, RelayError> {
        let mut sent = 0;
        while sent < max {
            let Some(head) = self.buffer.front().cloned() else {
                break;
            };
            match self.post(&head) {
                Ok(_) => {}
                Err(e) if e.is_transient() || e == ClientError::Unauthorized => break,
                Err(e) => {
                    warn!(error = %e, node = head.node_id, seq = head.seq, "dropping refused buffered record");
                    self.stats.refused += 1;
                    self.buffer.pop()?;
                    continue;
                }
            }
            self.buffer.pop()?;
            self.stats.posted += 1;
            self.stats.flushed += 1;
            sent += 1;
        }
        Ok(sent)
    }

    /// Fetch pending commands and return those this gateway acknowledged.
    ///
    /// Each command is acked before it is forwarded, so a redelivery racing
    /// another poll gets a conflict on ack and is dropped.
    pub fn poll_commands(&mut self) -> Result<Vec<Command>, RelayError> {
        let gw = self.gateway_id.clone();
        let pending = self.authed(|c, t| c.fetch_pending(t, &gw))?;
        let mut out = Vec::new();
        for cmd in pending {
            let id = cmd.command_id;
            match self.authed(|c, t| c.ack(t, id))? {
                AckStatus::Acked if self.forwarded.insert(id) => {
                    self.stats.commands_forwarded += 1;
                    out.push(cmd);
                }
                AckStatus::Acked | AckStatus::Conflict | AckStatus::NotFound => {
                    debug!(command = id, "command not forwarded");
                }
            }
        }
        Ok(out)
    }
}
