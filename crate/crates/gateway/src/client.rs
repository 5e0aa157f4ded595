//! Uplink to the ingestion service.

use aquagreen_core::telemetry::{Command, TelemetryRecord};
use serde::Deserialize;
use serde_json::json;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Connection refused, reset, timed out, or uplink down.
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("server error {0}")]
    Server(u16),
    /// A 4xx the request cannot recover from by retrying.
    #[error("request refused with {status}: {body}")]
    Refused { status: u16, body: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl ClientError {
    /// Worth buffering and retrying later.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Unreachable(_) | Self::Server(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostStatus {
    Created,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckStatus {
    Acked,
    /// Already acknowledged or otherwise not deliverable to us.
    Conflict,
    NotFound,
}

pub trait ServiceClient {
    fn login(&mut self) -> Result<String, ClientError>;
    fn post_record(&mut self, token: &str, record: &TelemetryRecord) -> Result<PostStatus, ClientError>;
    fn fetch_pending(&mut self, token: &str, gateway_id: &str) -> Result<Vec<Command>, ClientError>;
    fn ack(&mut self, token: &str, command_id: u64) -> Result<AckStatus, ClientError>;
}

impl<C: ServiceClient + ?Sized> ServiceClient for Box<C> {
    fn login(&mut self) -> Result<String, ClientError> {
        (**self).login()
    }
    fn post_record(&mut self, token: &str, record: &TelemetryRecord) -> Result<PostStatus, ClientError> {
        (**self).post_record(token, record)
    }
    fn fetch_pending(&mut self, token: &str, gateway_id: &str) -> Result<Vec<Command>, ClientError> {
        (**self).fetch_pending(token, gateway_id)
    }
    fn ack(&mut self, token: &str, command_id: u64) -> Result<AckStatus, ClientError> {
        (**self).ack(token, command_id)
    }
}

/// Blocking HTTP client.
pub struct HttpClient {
    base_url: String,
    username: String,
    password: String,
    agent: ureq::Agent,
}

type HttpResponse = ureq::http::Response<ureq::Body>;

impl HttpClient {
    pub fn new(base_url: &str, username: &str, password: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            username: username.to_string(),
            password: password.to_string(),
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    fn send(result: Result<HttpResponse, ureq::Error>) -> Result<(u16, String), ClientError> {
        let mut resp = result.map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        match status {
            401 => Err(ClientError::Unauthorized),
            500..=599 => Err(ClientError::Server(status)),
            _ => Ok((status, body)),
        }
    }

    fn parse<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ClientError> {
        serde_json::from_str(body).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl ServiceClient for HttpClient {
    fn login(&mut self) -> Result<String, ClientError> {
        #[derive(Deserialize)]
        struct Login {
            token: String,
        }
        let (status, body) = Self::send(
            self.agent
                .post(self.url("/api/v1/auth/login"))
                .send_json(json!({ "username": self.username, "password": self.password })),
        )?;
        if status != 200 {
            return Err(ClientError::Refused { status, body });
        }
        Ok(Self::parse::<Login>(&body)?.token)
    }

    fn post_record(&mut self, token: &str, record: &TelemetryRecord) -> Result<PostStatus, ClientError> {
        let (status, body) = Self::send(
            self.agent
                .post(self.url("/api/v1/ingest"))
                .header("Authorization", format!("Bearer {token}"))
                .send_json(record),
        )?;
        match status {
            201 => Ok(PostStatus::Created),
            200 => Ok(PostStatus::Duplicate),
            _ => Err(ClientError::Refused { status, body }),
        }
    }

    fn fetch_pending(&mut self, token: &str, gateway_id: &str) -> Result<Vec<Command>, ClientError> {
        let (status, body) = Self::send(
            self.agent
                .get(self.url("/api/v1/commands/pending"))
                .query("gateway", gateway_id)
                .header("Authorization", format!("Bearer {token}"))
                .call(),
        )?;
        if status != 200 {
            return Err(ClientError::Refused { status, body });
        }
        Self::parse(&body)
    }

    fn ack(&mut self, token: &str, command_id: u64) -> Result<AckStatus, ClientError> {
        let (status, body) = Self::send(
            self.agent
                .post(self.url(&format!("/api/v1/commands/{command_id}/ack")))
                .header("Authorization", format!("Bearer {token}"))
                .send_empty(),
        )?;
        match status {
            200 => Ok(AckStatus::Acked),
            409 => Ok(AckStatus::Conflict),
            404 => Ok(AckStatus::NotFound),
            _ => Err(ClientError::Refused { status, body }),
        }
    }
}

/// Switchable uplink failure for outage simulation.
#[derive(Debug, Clone, Default)]
pub struct UplinkSwitch(Arc<AtomicBool>);

impl UplinkSwitch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_down(&self, down: bool) {
        self.0.store(down, Ordering::SeqCst);
    }

    pub fn is_down(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Wraps a client and fails every call while the switch is down.
pub struct OutageClient<C> {
    inner: C,
    switch: UplinkSwitch,
}

impl<C> OutageClient<C> {
    pub fn new(inner: C, switch: UplinkSwitch) -> Self {
        Self { inner, switch }
    }

    fn check(&self) -> Result<(), ClientError> {
        if self.switch.is_down() {
            Err(ClientError::Unreachable("uplink down".into()))
        } else {
            Ok(())
        }
    }
}

impl<C: ServiceClient> ServiceClient for OutageClient<C> {
    fn login(&mut self) -> Result<String, ClientError> {
        self.check()?;
        self.inner.login()
    }
    fn post_record(&mut self, token: &str, record: &TelemetryRecord) -> Result<PostStatus, ClientError> {
        self.check()?;
        self.inner.post_record(token, record)
    }
    fn fetch_pending(&mut self, token: &str, gateway_id: &str) -> Result<Vec<Command>, ClientError> {
        self.check()?;
        self.inner.fetch_pending(token, gateway_id)
    }
    fn ack(&mut self, token: &str, command_id: u64) -> Result<AckStatus, ClientError> {
        self.check()?;
        self.inner.ack(token, command_id)
    }
}
