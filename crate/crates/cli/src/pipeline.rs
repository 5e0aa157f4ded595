//! Live end-to-end run: simulated farm -> gateway relay -> ingestion service.

use aquagreen_core::engine::Engine;
use aquagreen_core::scenario::{Outage, ScenarioConfig, Uplink};
use aquagreen_core::trace::RunMetrics;
use aquagreen_gateway::relay::RelayStats;
use aquagreen_gateway::sim::{Pacer, SimBridge};
use aquagreen_gateway::{DtnBuffer, OutageClient, Relay, ServiceClient, UplinkSwitch};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum OutageMode {
    /// Keep the scenario's own uplink schedule.
    Scenario,
    None,
    /// Uplink down for the whole run; everything arrives by the final flush.
    Full,
    Window { from_s: f64, to_s: f64 },
}

impl std::str::FromStr for OutageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scenario" => Ok(Self::Scenario),
            "none" => Ok(Self::None),
            "full" => Ok(Self::Full),
            other => {
                let (a, b) = other
                    .split_once(':')
                    .ok_or_else(|| format!("expected scenario, none, full or FROM_S:TO_S, got {other:?}"))?;
                let from_s: f64 = a.parse().map_err(|_| format!("bad outage start {a:?}"))?;
                let to_s: f64 = b.parse().map_err(|_| format!("bad outage end {b:?}"))?;
                if !(0.0 <= from_s && from_s < to_s) {
                    return Err(format!("outage window must satisfy 0 <= from < to, got {other}"));
                }
                Ok(Self::Window { from_s, to_s })
            }
        }
    }
}

impl OutageMode {
    pub fn apply(&self, scenario: &mut ScenarioConfig) {
        let uplink = match *self {
            Self::Scenario => return,
            Self::None => Uplink::Connected,
            Self::Full => Uplink::ScheduledOutages {
                outages: vec![Outage {
                    from_s: 0.0,
                    to_s: scenario.duration_s,
                }],
            },
            Self::Window { from_s, to_s } => Uplink::ScheduledOutages {
                outages: vec![Outage { from_s, to_s }],
            },
        };
        scenario.gateway.uplink = uplink;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub metrics: RunMetrics,
    pub trace_hash: String,
    pub relay: RelayStats,
    pub flushed_at_end: usize,
    pub still_buffered: usize,
    pub conservation_violations: u64,
    pub errors: Vec<String>,
    #[serde(skip)]
    pub trace_ndjson: String,
}

pub struct PipelineOptions<'a> {
    pub buffer_dir: &'a Path,
    /// Simulated seconds per wall-clock second; `None` runs unpaced.
    pub speed: Option<f64>,
    pub poll_every_s: f64,
}

pub fn run_pipeline<C: ServiceClient>(
    scenario: ScenarioConfig,
    client: C,
    opts: &PipelineOptions<'_>,
) -> anyhow::Result<PipelineReport> {
    let switch = UplinkSwitch::new();
    let relay = Relay::new(
        scenario.gateway.gateway_id.clone(),
        OutageClient::new(client, switch.clone()),
        DtnBuffer::open(opts.buffer_dir)?,
    );
    let mut bridge = SimBridge::new(
        relay,
        switch,
        scenario.gateway.uplink.clone(),
        scenario.start_epoch_s,
        opts.poll_every_s,
    );
    if let Some(speed) = opts.speed {
        bridge = bridge.with_pacer(Pacer::new(speed));
    }
    let engine = Engine::new(scenario)?;
    let out = engine.run_with(&mut bridge);
    let flushed_at_end = bridge.finish();
    let relay = bridge.relay();
    Ok(PipelineReport {
        trace_hash: out.trace_hash(),
        trace_ndjson: out.trace_ndjson(),
        metrics: out.metrics,
        relay: relay.stats().clone(),
        flushed_at_end,
        still_buffered: relay.buffered(),
        conservation_violations: bridge.conservation_violations,
        errors: bridge.errors.clone(),
    })
}

/// Received count is within three binomial standard deviations of
/// sent * (1 - p).
pub fn within_binomial_band(sent: u64, received: u64, p_loss: f64) -> bool {
    let n = sent as f64;
    let mean = n * (1.0 - p_loss);
    let sigma = (n * p_loss * (1.0 - p_loss)).sqrt();
    (received as f64 - mean).abs() <= 3.0 * sigma + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outage_mode_parses() {
        assert_eq!("full".parse::<OutageMode>().unwrap(), OutageMode::Full);
        assert_eq!(
            "3600:7200".parse::<OutageMode>().unwrap(),
            OutageMode::Window {
                from_s: 3600.0,
                to_s: 7200.0
            }
        );
        assert!("7200:3600".parse::<OutageMode>().is_err());
        assert!("sometimes".parse::<OutageMode>().is_err());
    }

    #[test]
    fn binomial_band() {
        assert!(within_binomial_band(396, 387, 0.023));
        assert!(within_binomial_band(396, 395, 0.023));
        assert!(within_binomial_band(396, 378, 0.023));
        assert!(!within_binomial_band(396, 396, 0.023));
        assert!(!within_binomial_band(396, 370, 0.023));
        assert!(within_binomial_band(10, 10, 0.0));
        assert!(!within_binomial_band(10, 9, 0.0));
    }
}
