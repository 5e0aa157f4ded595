use std::io::Write;
use std::net::UdpSocket;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use aquagreen_core::frame::{encode, Reading, SensorFrame, SensorKind};
use aquagreen_core::telemetry::TelemetryRecord;
use aquagreen_gateway::runner::encode_datagram;
use aquagreen_gateway::DtnBuffer;
use aquagreen_service::auth::{hash_password, verify_password, Credentials, Role, UserEntry};
use aquagreen_service::{ServiceConfig, ServiceHandle, SystemClock};
use serde_json::Value;

const GW_PASSWORD: &str = "gw-pass";

fn aquasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aquasim"))
        .args(args)
        .env_remove("AQUAGREEN_GW_PASSWORD")
        .output()
        .expect("spawn aquasim")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn service() -> ServiceHandle {
    let creds = Credentials {
        users: vec![UserEntry {
            username: "gw-1".into(),
            role: Role::Gateway,
            password_hash: hash_password(GW_PASSWORD, 1000),
        }],
    };
    let mut cfg = ServiceConfig::new("cli-test-secret-0123456789", creds);
    cfg.bind = "127.0.0.1:0".into();
    ServiceHandle::start(cfg, Arc::new(SystemClock)).unwrap()
}

fn record(seq: u16) -> TelemetryRecord {
    let frame = SensorFrame {
        node_id: 1,
        seq,
        timestamp_s: 1_614_556_800 + u32::from(seq) * 600,
        readings: vec![Reading {
            kind: SensorKind::WaterTemperatureC,
            value: 24.5,
        }],
        battery_mv: 3900,
    };
    TelemetryRecord::from_frame("gw-1", &frame, -105.0, 1_614_556_800)
}

fn gateway_config(dir: &Path, url: &str) -> std::path::PathBuf {
    let path = dir.join("gw.json");
    let cfg = serde_json::json!({
        "service_url": url,
        "username": "gw-1",
        "password": GW_PASSWORD,
        "gateway_id": "gw-1",
        "poll_interval_s": 0.2,
        "buffer_path": "buffer",
        "listen": "127.0.0.1:0",
        "request_timeout_s": 2.0
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn survey_bundled_table_passes() {
    let out = aquasim(&["survey", "--json"]);
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    assert!((v["fitted_excess_db"].as_f64().unwrap() - 63.51240904148775).abs() < 1e-9);
    assert_eq!(v["reachable"], 6);
    assert_eq!(v["unreachable"], 3);
    assert!(v["max_abs_residual_db"].as_f64().unwrap() <= 4.0);
}

#[test]
fn survey_usage_errors_and_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "label,distance_m,rssi_dbm,obstruction\n").unwrap();
    assert_eq!(code(&aquasim(&["survey", "--csv", empty.to_str().unwrap()])), 2);
    assert_eq!(code(&aquasim(&["survey", "--csv", "/nonexistent.csv"])), 2);

    // One point: the fitted excess is that point's free-space residual.
    let one = dir.path().join("a.csv");
    std::fs::write(&one, "label,distance_m,rssi_dbm,obstruction\nA,43,-108,none\n").unwrap();
    let out = aquasim(&["survey", "--json", "--csv", one.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    let free_space_rssi = 17.0 + 3.0 + 3.0 - 64.3477909929207;
    let expected = free_space_rssi - -108.0;
    assert!((v["fitted_excess_db"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert!(v["rows"][0]["residual_db"].as_f64().unwrap().abs() < 1e-9);

    // With a forced excess the measured points fall below a tight sensitivity.
    let out = aquasim(&["survey", "--site-excess", "63.5", "--sensitivity-dbm", "-105"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn run_is_deterministic_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = dir.path().join("a.ndjson");
    let t2 = dir.path().join("b.ndjson");
    let a = aquasim(&["run", "--json", "--scenario", "farm_survey", "--seed", "5", "--out", t1.to_str().unwrap()]);
    let b = aquasim(&["run", "--json", "--scenario", "farm_survey", "--seed", "5", "--out", t2.to_str().unwrap()]);
    let c = aquasim(&["run", "--json", "--scenario", "farm_survey", "--seed", "6"]);
    assert_eq!(code(&a), 0);
    let (a, b, c) = (json_of(&a), json_of(&b), json_of(&c));
    assert_eq!(a["trace_hash"], b["trace_hash"]);
    assert_ne!(a["trace_hash"], c["trace_hash"]);
    assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());

    let hash = a["trace_hash"].as_str().unwrap();
    let r = aquasim(&["replay", "--json", "--trace", t1.to_str().unwrap(), "--expect-hash", hash]);
    assert_eq!(code(&r), 0);
    assert_eq!(json_of(&r)["metrics"], a["metrics"]);
    let wrong = aquasim(&["replay", "--trace", t1.to_str().unwrap(), "--expect-hash", "00"]);
    assert_eq!(code(&wrong), 1);

    let mut text = std::fs::read_to_string(&t1).unwrap();
    text.truncate(text.len() / 2);
    std::fs::write(&t2, text).unwrap();
    assert_eq!(code(&aquasim(&["replay", "--trace", t2.to_str().unwrap()])), 1);
    assert_eq!(code(&aquasim(&["replay", "--trace", "/nonexistent.ndjson"])), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&aquasim(&["run"])), 2);
    assert_eq!(code(&aquasim(&["run", "--scenario", "no_such"])), 2);
    assert_eq!(code(&aquasim(&["bogus"])), 2);
    assert_eq!(code(&aquasim(&["run", "--scenario", "pool_66h", "--live"])), 2);
    let out = aquasim(&["run", "--json", "--scenario", "pool_66h", "--live", "--service-url", "http://127.0.0.1:9"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json_of(&out)["exit_code"], 2);
}

#[test]
fn frames_dump_decodes_and_flags_corruption() {
    let hex = "a64701010000000100010e00000058603c2e800f48010041c40000b4e0";
    let out = aquasim(&["frames", "dump", "--json", hex]);
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    assert_eq!(v["frames"][0]["frame"]["seq"], 1);
    assert_eq!(v["frames"][0]["len"], 29);

    let mut bytes = hex::decode(hex).unwrap();
    bytes[20] ^= 0x01;
    let out = aquasim(&["frames", "dump", "--json", &hex::encode(&bytes)]);
    assert_eq!(code(&out), 1);
    assert_eq!(json_of(&out)["frames"][0]["error"], "payload_crc_mismatch");

    assert_eq!(code(&aquasim(&["frames", "dump", "zz"])), 2);

    let out = aquasim(&["frames", "dump", "--json", "--scenario", "pool_66h", "--limit", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json_of(&out)["frames"].as_array().unwrap().len(), 3);

    let mut child = Command::new(env!("CARGO_BIN_EXE_aquasim"))
        .args(["frames", "dump", "--json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    writeln!(child.stdin.take().unwrap(), "{hex}\n\n{hex}").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(json_of(&out)["frames"].as_array().unwrap().len(), 2);
}

#[test]
fn scenario_show_roundtrips() {
    let out = aquasim(&["scenario", "show", "do_crash"]);
    assert_eq!(code(&out), 0);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    std::fs::write(&p, &out.stdout).unwrap();
    let a = json_of(&aquasim(&["run", "--json", "--scenario", p.to_str().unwrap()]));
    let b = json_of(&aquasim(&["run", "--json", "--scenario", "do_crash"]));
    assert_eq!(a["trace_hash"], b["trace_hash"]);
    let list = json_of(&aquasim(&["scenario", "list", "--json"]));
    assert_eq!(list["scenarios"].as_array().unwrap().len(), 4);
}

#[test]
fn hash_password_output_verifies() {
    let out = aquasim(&["hash-password", "--password", "s3cret", "--rounds", "1000", "--json"]);
    assert_eq!(code(&out), 0);
    let h = json_of(&out)["password_hash"].as_str().unwrap().to_string();
    assert!(verify_password("s3cret", &h));
    assert!(!verify_password("other", &h));
}

#[test]
fn live_run_stores_every_delivered_frame() {
    let svc = service();
    let dir = tempfile::tempdir().unwrap();
    let url = svc.base_url();
    let buffer = dir.path().join("buf");
    let out = Command::new(env!("CARGO_BIN_EXE_aquasim"))
        .args(["run", "--json", "--scenario", "outage_1h", "--live", "--service-url", &url])
        .args(["--buffer", buffer.to_str().unwrap()])
        .env("AQUAGREEN_GW_PASSWORD", GW_PASSWORD)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    let received = v["metrics"]["frames_received"].as_u64().unwrap();
    assert!(received > 0);
    assert!(v["relay"]["flushed"].as_u64().unwrap() > 0, "outage scenario buffers frames");
    assert_eq!(svc.record_count() as u64, received);
}

#[test]
fn live_run_with_bad_password_fails() {
    let svc = service();
    let dir = tempfile::tempdir().unwrap();
    let out = aquasim(&[
        "run",
        "--scenario",
        "pool_66h",
        "--live",
        "--service-url",
        &svc.base_url(),
        "--password",
        "wrong",
        "--buffer",
        dir.path().join("buf").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(svc.record_count(), 0);
}

#[test]
fn demo_passes_unpaced_with_and_without_outage() {
    let out = aquasim(&["demo", "--json", "--speed", "0", "--port", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let v = json_of(&out);
    assert_eq!(v["sent"], 396);
    assert_eq!(v["stored"], v["received"]);

    let out = aquasim(&["demo", "--json", "--speed", "0", "--port", "0", "--outage", "full"]);
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    assert_eq!(v["stored"], v["received"]);
    assert_eq!(v["pipeline"]["relay"]["posted_direct"], 0);
    assert_eq!(v["pipeline"]["relay"]["flushed"], v["received"]);
}

#[test]
fn demo_with_occupied_port_is_a_clean_startup_error() {
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let out = aquasim(&["demo", "--json", "--speed", "0", "--port", &port]);
    assert_eq!(code(&out), 2);
    let v = json_of(&out);
    assert!(v["error"].as_str().unwrap().contains("cannot bind"));
    assert!(out.stderr.is_empty() || !String::from_utf8_lossy(&out.stderr).contains("panicked"));
}

#[test]
fn aquagw_flush_now_drains_buffer() {
    let svc = service();
    let dir = tempfile::tempdir().unwrap();
    let cfg = gateway_config(dir.path(), &svc.base_url());
    {
        let mut buf = DtnBuffer::open(dir.path().join("buffer")).unwrap();
        for seq in 0..5 {
            assert!(buf.push(record(seq)).unwrap());
        }
    }
    let out = Command::new(env!("CARGO_BIN_EXE_aquagw"))
        .args(["--config", cfg.to_str().unwrap(), "--flush-now", "--json"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["flushed"], 5);
    assert_eq!(v["remaining"], 0);
    assert_eq!(svc.record_count(), 5);
    assert!(DtnBuffer::open(dir.path().join("buffer")).unwrap().is_empty());
}

#[test]
fn aquagw_flush_now_with_service_down_keeps_records() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let cfg = gateway_config(dir.path(), &format!("http://127.0.0.1:{port}"));
    DtnBuffer::open(dir.path().join("buffer")).unwrap().push(record(0)).unwrap();
    let out = aquasim(&["gateway", "--json", "--config", cfg.to_str().unwrap(), "--flush-now"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json_of(&out)["remaining"], 1);
    assert_eq!(DtnBuffer::open(dir.path().join("buffer")).unwrap().len(), 1);
}

#[test]
fn aquagw_relays_udp_datagrams() {
    let svc = service();
    let dir = tempfile::tempdir().unwrap();
    let listen = {
        let s = UdpSocket::bind("127.0.0.1:0").unwrap();
        s.local_addr().unwrap().to_string()
    };
    let cfg = gateway_config(dir.path(), &svc.base_url());
    let mut child = Command::new(env!("CARGO_BIN_EXE_aquagw"))
        .args(["--config", cfg.to_str().unwrap(), "--listen", &listen])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
    let frame = SensorFrame {
        node_id: 7,
        seq: 3,
        timestamp_s: 1_614_556_800,
        readings: vec![Reading {
            kind: SensorKind::DissolvedOxygenMgl,
            value: 6.5,
        }],
        battery_mv: 4000,
    };
    let dgram = encode_datagram(-104.9, encode(&frame).unwrap().as_bytes());
    let deadline = Instant::now() + Duration::from_secs(20);
    // Resend until the gateway is up; the service dedups repeats.
    while svc.record_count() == 0 && Instant::now() < deadline {
        tx.send_to(&dgram, &listen).unwrap();
        std::thread::sleep(Duration::from_millis(200));
    }
    child.kill().unwrap();
    let _ = child.wait();
    assert_eq!(svc.record_count(), 1);
}
