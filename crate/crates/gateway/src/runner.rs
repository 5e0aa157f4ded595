//! Standalone gateway process: radio frames arrive as UDP datagrams.
//!
//! Datagram layout: RSSI as a big-endian i16 in tenths of a dBm, then the
//! frame bytes.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;
use tracing::{info, warn};

use crate::buffer::{BufferError, DtnBuffer};
use crate::client::{HttpClient, ServiceClient};
use crate::relay::{Relay, RelayError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error("socket: {0}")]
    Socket(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayFileConfig {
    pub service_url: String,
    pub username: String,
    pub password: String,
    pub gateway_id: String,
    #[serde(default = "default_poll")]
    pub poll_interval_s: f64,
    pub buffer_path: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: f64,
}

fn default_poll() -> f64 {
    5.0
}

fn default_listen() -> String {
    "127.0.0.1:1700".into()
}

fn default_timeout() -> f64 {
    5.0
}

impl GatewayFileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let err = |message: String| GatewayError::Config {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| err(format!("{}: {}", e.path(), e.inner())))?;
        if cfg.buffer_path.is_relative() {
            cfg.buffer_path = path.parent().unwrap_or(Path::new(".")).join(&cfg.buffer_path);
        }
        if !(cfg.poll_interval_s > 0.0) {
            return Err(err("poll_interval_s must be positive".into()));
        }
        if !(cfg.request_timeout_s > 0.0) {
            return Err(err("request_timeout_s must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn client(&self) -> HttpClient {
        HttpClient::new(
            &self.service_url,
            &self.username,
            &self.password,
            Duration::from_secs_f64(self.request_timeout_s),
        )
    }

    pub fn open_relay(&self) -> Result<Relay<HttpClient>, GatewayError> {
        Ok(Relay::new(
            self.gateway_id.clone(),
            self.client(),
            DtnBuffer::open(&self.buffer_path)?,
        ))
    }
}

pub fn encode_datagram(rssi_dbm: f64, frame: &[u8]) -> Vec<u8> {
    let ddbm = (rssi_dbm * 10.0).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
    let mut out = ddbm.to_be_bytes().to_vec();
    out.extend_from_slice(frame);
    out
}

pub fn decode_datagram(d: &[u8]) -> Option<(f64, &[u8])> {
    if d.len() < 2 {
        return None;
    }
    let ddbm = i16::from_be_bytes([d[0], d[1]]);
    Some((f64::from(ddbm) / 10.0, &d[2..]))
}

fn epoch_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Exponential retry delay for the command poller.
#[derive(Debug, Clone)]
pub struct Backoff {
    base: Duration,
    max: Duration,
    current: Duration,
}

impl Backoff {
    pub fn new(base: Duration, max: Duration) -> Self {
        Self {
            base,
            max,
            current: base,
        }
    }

    pub fn success(&mut self) -> Duration {
        self.current = self.base;
        self.base
    }

    pub fn failure(&mut self) -> Duration {
        let d = self.current;
        self.current = (self.current * 2).min(self.max);
        d
    }
}

/// Receive frames and poll for commands until `stop` is set. Forwarded
/// commands are written to `commands_out` as JSON lines.
pub fn run<C: ServiceClient>(
    relay: &mut Relay<C>,
    socket: &UdpSocket,
    poll_interval: Duration,
    stop: &AtomicBool,
    commands_out: &mut dyn Write,
) -> Result<(), GatewayError> {
    socket.set_read_timeout(Some(Duration::from_millis(200)))?;
    let mut backoff = Backoff::new(poll_interval, Duration::from_secs(300));
    let mut next_poll = Instant::now();
    let mut buf = [0u8; 512];
    info!(addr = %socket.local_addr()?, "gateway listening");
    while !stop.load(Ordering::SeqCst) {
        match socket.recv(&mut buf) {
            Ok(n) => match decode_datagram(&buf[..n]) {
                Some((rssi, frame)) => {
                    let outcome = relay.relay(frame, rssi, epoch_now())?;
                    info!(?outcome, buffered = relay.buffered(), "frame");
                }
                None => warn!(len = n, "short datagram"),
            },
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.into()),
        }
        if Instant::now() >= next_poll {
            let result = relay.poll_commands().and_then(|cmds| {
                if !relay.buffer().is_empty() {
                    relay.flush()?;
                }
                Ok(cmds)
            });
            let wait = match result {
                Ok(cmds) => {
                    for c in cmds {
                        writeln!(commands_out, "{}", serde_json::to_string(&c).expect("command serializes"))?;
                    }
                    commands_out.flush()?;
                    backoff.success()
                }
                Err(e) => {
                    warn!(error = %e, "uplink poll failed");
                    backoff.failure()
                }
            };
            next_poll = Instant::now() + wait;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datagram_roundtrip() {
        let d = encode_datagram(-104.86, &[1, 2, 3]);
        let (rssi, f) = decode_datagram(&d).unwrap();
        assert!((rssi + 104.9).abs() < 1e-9);
        assert_eq!(f, &[1, 2, 3]);
        assert!(decode_datagram(&[1]).is_none());
    }

    #[test]
    fn backoff_doubles_to_cap_and_resets() {
        let mut b = Backoff::new(Duration::from_secs(5), Duration::from_secs(30));
        let seq: Vec<u64> = (0..5).map(|_| b.failure().as_secs()).collect();
        assert_eq!(seq, vec![5, 10, 20, 30, 30]);
        assert_eq!(b.success().as_secs(), 5);
        assert_eq!(b.failure().as_secs(), 5);
    }
}
