//! End-to-end demo: the ingestion service on its own thread, the gateway
//! relay and the paced simulation on this one.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use aquagreen_gateway::HttpClient;
use aquagreen_service::auth::{hash_password, Credentials, Role, UserEntry};
use aquagreen_service::ServiceConfig;
use clap::Args;
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::pipeline::{run_pipeline, within_binomial_band, OutageMode, PipelineOptions};
use crate::{check_speed, failed, load_scenario, start_service, CliError, Report};

/// Generated demo accounts are throwaway; a lighter hash keeps startup quick.
const DEMO_PBKDF2_ROUNDS: u32 = 10_000;

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value = "pool_66h")]
    pub scenario: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    #[arg(long, default_value_t = 600.0)]
    pub speed: f64,
    /// Uplink outages: scenario, none, full or FROM_S:TO_S.
    #[arg(long, default_value = "scenario")]
    pub outage: OutageMode,
    /// Service port on 127.0.0.1; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Password for the `operator` account (for the dashboard).
    #[arg(long, env = "AQUAGREEN_OPERATOR_PASSWORD", default_value = "operator", hide_env_values = true)]
    pub operator_password: String,
    /// DTN buffer directory; a fresh temporary one by default.
    #[arg(long)]
    pub buffer: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub poll_interval_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn random_token() -> String {
    let bytes: [u8; 24] = rand::rng().random();
    hex::encode(bytes)
}

pub fn demo(a: &DemoArgs, json_out: bool) -> Result<Report, CliError> {
    let mut scenario = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    a.outage.apply(&mut scenario);
    scenario.validate().map_err(crate::usage)?;
    let speed = if a.speed == 0.0 { None } else { check_speed(Some(a.speed))? };

    let gw_id = scenario.gateway.gateway_id.clone();
    let gw_password = random_token();
    let credentials = Credentials {
        users: vec![
            UserEntry {
                username: "operator".into(),
                role: Role::Operator,
                password_hash: hash_password(&a.operator_password, DEMO_PBKDF2_ROUNDS),
            },
            UserEntry {
                username: gw_id.clone(),
                role: Role::Gateway,
                password_hash: hash_password(&gw_password, DEMO_PBKDF2_ROUNDS),
            },
        ],
    };
    let mut config = ServiceConfig::new(random_token(), credentials).with_scenario(&scenario);
    config.bind = format!("127.0.0.1:{}", a.port);
    let service = start_service(config)?;
    let url = service.base_url();
    if !json_out {
        eprintln!(
            "service at {url} (operator login: operator); simulating {:.1} h at {}",
            scenario.duration_s / 3600.0,
            speed.map_or("full speed".into(), |s| format!("{s}x"))
        );
    }

    let tmp;
    let buffer_dir = match &a.buffer {
        Some(p) => p.clone(),
        None => {
            tmp = TempDir::new().map_err(failed)?;
            tmp.0.clone()
        }
    };
    let p_loss = scenario.loss_probability;
    let client = HttpClient::new(&url, &gw_id, &gw_password, Duration::from_secs(5));
    let report = run_pipeline(
        scenario,
        client,
        &PipelineOptions {
            buffer_dir: &buffer_dir,
            speed,
            poll_every_s: a.poll_interval_s,
        },
    )
    .map_err(failed)?;
    let stored = service.record_count();
    let readings = service.reading_count();
    let service_result = service.shutdown();

    let m = &report.metrics;
    let in_range = m.frames_sent - m.frames_lost_rssi;
    let checks = vec![
        Check {
            name: "trace_conserved",
            ok: m.is_conserved(),
            detail: format!(
                "sent {} = received {} + lost {} + {}",
                m.frames_sent, m.frames_received, m.frames_lost_rssi, m.frames_lost_random
            ),
        },
        Check {
            name: "relay_conserved",
            ok: report.conservation_violations == 0,
            detail: format!("{} violations", report.conservation_violations),
        },
        Check {
            name: "buffer_drained",
            ok: report.still_buffered == 0,
            detail: format!("{} still buffered", report.still_buffered),
        },
        Check {
            name: "stored_equals_received",
            ok: stored as u64 == m.frames_received,
            detail: format!("stored {stored}, received {}", m.frames_received),
        },
        Check {
            name: "loss_within_3_sigma",
            ok: within_binomial_band(in_range, m.frames_received, p_loss),
            detail: format!("received {} of {in_range} in range at p_loss {p_loss}", m.frames_received),
        },
        Check {
            name: "no_relay_errors",
            ok: report.errors.is_empty(),
            detail: report.errors.join("; "),
        },
        Check {
            name: "service_healthy",
            ok: service_result.is_ok(),
            detail: service_result.err().map(|e| e.to_string()).unwrap_or_default(),
        },
    ];
    let ok = checks.iter().all(|c| c.ok);

    let mut text = String::new();
    let _ = writeln!(
        text,
        "sent {}, received {}, stored {} ({} readings), flushed from buffer {}",
        m.frames_sent, m.frames_received, stored, readings, report.relay.flushed
    );
    for c in &checks {
        let _ = writeln!(
            text,
            "{} {}{}",
            if c.ok { "PASS" } else { "FAIL" },
            c.name,
            if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) }
        );
    }
    Ok(Report {
        ok,
        json: json!({
            "ok": ok,
            "sent": m.frames_sent,
            "received": m.frames_received,
            "stored": stored,
            "readings": readings,
            "checks": checks,
            "pipeline": report,
        }),
        text,
    })
}

/// Scratch directory removed on drop.
struct TempDir(PathBuf);

impl TempDir {
    fn new() -> std::io::Result<Self> {
        let p = std::env::temp_dir().join(format!("aquagreen-demo-{}", random_token()));
        std::fs::create_dir_all(&p)?;
        Ok(Self(p))
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}
