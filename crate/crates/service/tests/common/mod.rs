#![allow(dead_code)]

use aquagreen_core::telemetry::{SeriesValue, TelemetryRecord};
use aquagreen_service::auth::{hash_password, Credentials, Role, UserEntry};
use aquagreen_service::{ManualClock, ServiceConfig, ServiceHandle};
use serde_json::Value;
use std::sync::Arc;

pub const SECRET: &str = "test-secret-0123456789";
pub const T0: u64 = 1_700_000_000;

pub fn credentials() -> Credentials {
    let user = |name: &str, role, pw: &str| UserEntry {
        username: name.into(),
        role,
        password_hash: hash_password(pw, 1000),
    };
    Credentials {
        users: vec![
            user("op", Role::Operator, "op-pass"),
            user("gw-1", Role::Gateway, "gw-pass"),
            user("gw-2", Role::Gateway, "gw2-pass"),
        ],
    }
}

pub fn config() -> ServiceConfig {
    let mut c = ServiceConfig::new(SECRET, credentials());
    c.bind = "127.0.0.1:0".into();
    c.tanks = vec!["tank-1".into(), "tank-2".into()];
    c.node_tanks = [(1, "tank-1".to_string()), (2, "tank-2".to_string())].into();
    c
}

pub fn start(cfg: ServiceConfig) -> (ServiceHandle, ManualClock) {
    let clock = ManualClock::new(T0);
    let h = ServiceHandle::start(cfg, Arc::new(clock.clone())).unwrap();
    (h, clock)
}

pub struct Api {
    pub base: String,
    agent: ureq::Agent,
}

impl Api {
    pub fn new(base: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self { base, agent }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
        let mut resp = resp.unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    pub fn get(&self, path: &str, token: Option<&str>) -> (u16, Value) {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.call())
    }

    pub fn post(&self, path: &str, token: Option<&str>, body: &Value) -> (u16, Value) {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.send_json(body))
    }

    pub fn login(&self, user: &str, pw: &str) -> String {
        let (s, v) = self.post(
            "/api/v1/auth/login",
            None,
            &serde_json::json!({"username": user, "password": pw}),
        );
        assert_eq!(s, 200, "{v}");
        v["token"].as_str().unwrap().to_string()
    }
}

pub fn record(node_id: u32, seq: u16, ts: u64, readings: &[(&str, f64)]) -> TelemetryRecord {
    TelemetryRecord {
        gateway_id: "gw-1".into(),
        node_id,
        seq,
        timestamp_s: ts,
        readings: readings
            .iter()
            .map(|(s, v)| SeriesValue {
                series: s.to_string(),
                value: *v,
            })
            .collect(),
        battery_v: 3.95,
        rssi_dbm: -104.9,
        received_at_s: ts + 1,
    }
}
