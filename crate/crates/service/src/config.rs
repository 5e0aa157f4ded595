use aquagreen_core::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

use crate::alerts::AlertRule;
use crate::auth::{Credentials, TOKEN_TTL_S};
use crate::commands::REDELIVERY_AFTER_S;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}: {path}: {message}")]
    Field {
        file: PathBuf,
        path: String,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// HMAC key for bearer tokens.
    pub secret: String,
    /// Inline users; merged with `credentials_path` if both are given.
    #[serde(default)]
    pub credentials: Credentials,
    #[serde(default)]
    pub credentials_path: Option<PathBuf>,
    /// Directory for the document store; `None` keeps data in memory.
    #[serde(default)]
    pub store_path: Option<PathBuf>,
    /// Tank each node is installed in, used to tag stored readings.
    #[serde(default)]
    pub node_tanks: BTreeMap<u32, String>,
    /// Tanks that accept commands; empty accepts any tank id.
    #[serde(default)]
    pub tanks: Vec<String>,
    #[serde(default = "default_gateway")]
    pub default_gateway_id: String,
    #[serde(default = "AlertRule::default_rules")]
    pub alert_rules: Vec<AlertRule>,
    #[serde(default = "default_ttl")]
    pub token_ttl_s: u64,
    #[serde(default = "default_redelivery")]
    pub redelivery_s: u64,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_gateway() -> String {
    "gw-1".into()
}

fn default_ttl() -> u64 {
    TOKEN_TTL_S
}

fn default_redelivery() -> u64 {
    REDELIVERY_AFTER_S
}

impl ServiceConfig {
    pub fn new(secret: impl Into<String>, credentials: Credentials) -> Self {
        Self {
            bind: default_bind(),
            secret: secret.into(),
            credentials,
            credentials_path: None,
            store_path: None,
            node_tanks: BTreeMap::new(),
            tanks: Vec::new(),
            default_gateway_id: default_gateway(),
            alert_rules: AlertRule::default_rules(),
            token_ttl_s: TOKEN_TTL_S,
            redelivery_s: REDELIVERY_AFTER_S,
        }
    }

    /// Tank registry and node placement taken from a scenario.
    pub fn with_scenario(mut self, scenario: &ScenarioConfig) -> Self {
        self.tanks = scenario.tanks.iter().map(|t| t.tank_id.clone()).collect();
        self.node_tanks = scenario
            .nodes
            .iter()
            .map(|n| (n.node_id, n.tank_id.clone()))
            .collect();
        self.default_gateway_id = scenario.gateway.gateway_id.clone();
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: ServiceConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Field {
            file: path.to_path_buf(),
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if let Some(p) = &cfg.credentials_path {
            let p = path.parent().unwrap_or(Path::new(".")).join(p);
            let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?;
            let extra: Credentials = serde_json::from_str(&text).map_err(|e| ConfigError::Field {
                file: p.clone(),
                path: "users".into(),
                message: e.to_string(),
            })?;
            cfg.credentials.users.extend(extra.users);
        }
        if let Some(store) = &cfg.store_path {
            if store.is_relative() {
                cfg.store_path = Some(path.parent().unwrap_or(Path::new(".")).join(store));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.secret.len() < 16 {
            return Err(ConfigError::Invalid("secret must be at least 16 bytes".into()));
        }
        if self.credentials.users.is_empty() {
            return Err(ConfigError::Invalid("no users configured".into()));
        }
        if self.token_ttl_s == 0 {
            return Err(ConfigError::Invalid("token_ttl_s must be positive".into()));
        }
        Ok(())
    }
}

/// Wall-clock source in epoch seconds; swappable for tests.
pub trait Clock: Send + Sync {
    fn now_s(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_s(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

#[derive(Debug, Default, Clone)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(start_s: u64) -> Self {
        Self(Arc::new(AtomicU64::new(start_s)))
    }

    pub fn set(&self, s: u64) {
        self.0.store(s, Ordering::SeqCst);
    }

    pub fn advance(&self, ds: u64) {
        self.0.fetch_add(ds, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_s(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}
