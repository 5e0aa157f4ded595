//! Deterministic discrete-event simulation of tanks, nodes and the radio channel.
//!
//! Events run in (time, insertion sequence) order on a single thread. Random
//! draws come from three independent ChaCha streams (farm noise, sensor noise,
//! channel loss) derived from the scenario seed, so identical inputs always
//! produce a byte-identical trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::farm::{Farm, TankCommand};
use crate::frame::{encode, WireFrame};
use crate::link::{airtime_s, predict_rssi, SiteModel};
use crate::node::{schedule_next_wake, NodeState};
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::telemetry::{CommandAction, TankDirective};
use crate::time::SimTime;
use crate::trace::{outcome, MetricsAccumulator, RunInfo, RunMetrics, TraceKind, TraceRecord};

const STREAM_FARM: u64 = 1;
const STREAM_SENSOR: u64 = 2;
const STREAM_CHANNEL: u64 = 3;

/// Boundary between the event loop and the outside world.
///
/// Offline runs use [`NoHooks`]. Live runs forward deliveries to a gateway,
/// pull operator commands, and pace the loop against the wall clock.
pub trait RunHooks {
    /// Called before each event is processed.
    fn before_event(&mut self, _at: SimTime) {}

    /// A frame cleared the channel and reached the gateway radio.
    fn on_delivery(&mut self, _at: SimTime, _frame: &WireFrame, _rssi_dbm: f64) {}

    /// Polled once per farm tick; returned directives apply immediately.
    fn poll_commands(&mut self, _at: SimTime) -> Vec<TankDirective> {
        Vec::new()
    }

    /// Called after each farm tick with the updated tank states.
    fn on_tick(&mut self, _at: SimTime, _farm: &Farm) {}
}

pub struct NoHooks;

impl RunHooks for NoHooks {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    FarmTick,
    Wake { node: usize, generation: u64 },
    Depleted { node: usize, generation: u64 },
    AnomalyStart(usize),
    AnomalyEnd(usize),
    ScriptedCommand(usize),
}

#[derive(Debug, PartialEq, Eq)]
struct Scheduled {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct NodeRuntime {
    state: NodeState,
    interval_s: f64,
    airtime_s: f64,
    rssi_dbm: f64,
    generation: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRecord>,
}

impl RunOutput {
    pub fn trace_ndjson(&self) -> String {
        crate::trace::to_ndjson(&self.trace)
    }

    pub fn trace_hash(&self) -> String {
        crate::trace::trace_hash(&self.trace)
    }
}

pub struct Engine {
    scenario: ScenarioConfig,
    site: SiteModel,
    farm: Farm,
    nodes: Vec<NodeRuntime>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    end: SimTime,
    farm_rng: ChaCha8Rng,
    sensor_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    acc: MetricsAccumulator,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Engine {
    pub fn new(scenario: ScenarioConfig) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let site = scenario.site_model()?;
        let farm = Farm::new(scenario.farm, scenario.tanks.iter().cloned());
        let mut nodes = Vec::with_capacity(scenario.nodes.len());
        for cfg in &scenario.nodes {
            let point = scenario
                .survey_point(&cfg.survey_label)
                .expect("validated survey label");
            let rssi_dbm = predict_rssi(&scenario.radio, &site, point)
                .map_err(|e| ScenarioError::Field {
                    path: "survey".into(),
                    message: e.to_string(),
                })?;
            nodes.push(NodeRuntime {
                state: NodeState::new(
                    cfg.node_id,
                    cfg.tank_id.clone(),
                    cfg.survey_label.clone(),
                    cfg.profile.resolve().expect("validated profile"),
                    cfg.sensors.clone(),
                    cfg.sampling.clone(),
                ),
                interval_s: cfg.interval_s,
                airtime_s: airtime_s(&scenario.radio, cfg.frame_len()),
                rssi_dbm,
                generation: 0,
            });
        }
        let seed = scenario.seed;
        Ok(Self {
            end: SimTime::from_secs_f64(scenario.duration_s),
            site,
            farm,
            nodes,
            queue: BinaryHeap::new(),
            next_seq: 0,
            farm_rng: stream(seed, STREAM_FARM),
            sensor_rng: stream(seed, STREAM_SENSOR),
            channel_rng: stream(seed, STREAM_CHANNEL),
            trace: Vec::new(),
            acc: MetricsAccumulator::new(),
            scenario,
        })
    }

    pub fn site(&self) -> &SiteModel {
        &self.site
    }

    pub fn farm(&self) -> &Farm {
        &self.farm
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { at, seq, event }));
    }

    fn emit(&mut self, rec: TraceRecord) {
        self.acc
            .observe(&rec)
            .expect("engine emits a well-formed trace");
        self.trace.push(rec);
    }

    fn seed_events(&mut self) {
        for i in 0..self.scenario.anomalies.len() {
            let at = SimTime::from_secs_f64(self.scenario.anomalies[i].at_s);
            self.schedule(at, Event::AnomalyStart(i));
        }
        for i in 0..self.scenario.commands.len() {
            let at = SimTime::from_secs_f64(self.scenario.commands[i].at_s);
            self.schedule(at, Event::ScriptedCommand(i));
        }
        for i in 0..self.nodes.len() {
            let at = SimTime::from_secs_f64(self.scenario.nodes[i].first_wake_s);
            self.schedule(at, Event::Wake { node: i, generation: 0 });
        }
        let tick = SimTime::from_secs_f64(self.scenario.farm.tick_s);
        self.schedule(tick, Event::FarmTick);
    }

    /// Run to completion without external interaction.
    pub fn run(self) -> RunOutput {
        self.run_with(&mut NoHooks)
    }

    pub fn run_with<H: RunHooks + ?Sized>(mut self, hooks: &mut H) -> RunOutput {
        let mut start = TraceRecord::new(0.0, TraceKind::Start);
        start.run = Some(RunInfo {
            seed: self.scenario.seed,
            duration_s: self.scenario.duration_s,
            nodes: self.nodes.iter().map(|n| n.state.node_id).collect(),
            tanks: self.farm.tanks.keys().cloned().collect(),
        });
        self.emit(start);
        self.seed_events();

        while let Some(Reverse(next)) = self.queue.pop() {
            if next.at >= self.end {
                break;
            }
            hooks.before_event(next.at);
            self.process(next.at, next.event, hooks);
        }

        let end = TraceRecord::new(self.scenario.duration_s, TraceKind::End);
        self.emit(end);
        let metrics = self.acc.finish().expect("engine trace is complete");
        RunOutput {
            metrics,
            trace: self.trace,
        }
    }

    fn process<H: RunHooks + ?Sized>(&mut self, at: SimTime, event: Event, hooks: &mut H) {
        match event {
            Event::FarmTick => self.farm_tick(at, hooks),
            Event::Wake { node, generation } => {
                if self.nodes[node].generation == generation {
                    self.wake(node, at, hooks);
                }
            }
            Event::Depleted { node, generation } => {
                if self.nodes[node].generation == generation {
                    self.nodes[node].state.drain_until(at);
                    self.record_death_if_any(node, at);
                }
            }
            Event::AnomalyStart(i) => {
                let ev = self.scenario.anomalies[i].clone();
                if let Ok(tank) = self.farm.tank_mut(&ev.tank_id) {
                    ev.apply(tank);
                }
                self.emit(
                    TraceRecord::new(at.as_secs_f64(), TraceKind::AnomalyStart)
                        .tank(&ev.tank_id)
                        .detail(format!("{:?} {}", ev.kind, ev.magnitude).to_lowercase()),
                );
                if let Some(d) = ev.duration_s {
                    self.schedule(at + d, Event::AnomalyEnd(i));
                }
            }
            Event::AnomalyEnd(i) => {
                let ev = self.scenario.anomalies[i].clone();
                if let Ok(tank) = self.farm.tank_mut(&ev.tank_id) {
                    ev.clear(tank);
                }
                self.emit(
                    TraceRecord::new(at.as_secs_f64(), TraceKind::AnomalyEnd)
                        .tank(&ev.tank_id)
                        .detail(format!("{:?}", ev.kind).to_lowercase()),
                );
            }
            Event::ScriptedCommand(i) => {
                let cmd = &self.scenario.commands[i];
                let directive = TankDirective {
                    tank_id: cmd.tank_id.clone(),
                    action: cmd.action,
                };
                self.apply_directive(at, &directive);
            }
        }
    }

    fn farm_tick<H: RunHooks + ?Sized>(&mut self, at: SimTime, hooks: &mut H) {
        for directive in hooks.poll_commands(at) {
            self.apply_directive(at, &directive);
        }
        let dt = self.scenario.farm.tick_s;
        let tod = (f64::from(self.scenario.start_epoch_s) + at.as_secs_f64()).rem_euclid(86_400.0);
        let tripped = self.farm.tick(dt, at, tod, &mut self.farm_rng);
        for tank_id in tripped {
            self.emit(TraceRecord::new(at.as_secs_f64(), TraceKind::ProductionLost).tank(&tank_id));
        }
        hooks.on_tick(at, &self.farm);
        self.schedule(at + dt, Event::FarmTick);
    }

    fn apply_directive(&mut self, at: SimTime, directive: &TankDirective) {
        let t = at.as_secs_f64();
        let label = match directive.action {
            CommandAction::AerationOn => "aeration_on".to_string(),
            CommandAction::AerationOff => "aeration_off".to_string(),
            CommandAction::SetIntervalS { interval_s } => format!("set_interval_s {interval_s}"),
        };
        let result = match directive.action {
            CommandAction::AerationOn => self
                .farm
                .apply_command(&directive.tank_id, TankCommand::AerationOn)
                .map_err(|e| e.to_string()),
            CommandAction::AerationOff => self
                .farm
                .apply_command(&directive.tank_id, TankCommand::AerationOff)
                .map_err(|e| e.to_string()),
            CommandAction::SetIntervalS { interval_s } => self.set_interval(&directive.tank_id, interval_s),
        };
        let rec = TraceRecord::new(t, TraceKind::Command)
            .tank(&directive.tank_id)
            .detail(match &result {
                Ok(()) => label,
                Err(e) => format!("{label}: {e}"),
            })
            .outcome(if result.is_ok() {
                outcome::APPLIED
            } else {
                outcome::REJECTED
            });
        self.emit(rec);
    }

    fn set_interval(&mut self, tank_id: &str, interval_s: f64) -> Result<(), String> {
        self.farm.tank(tank_id).map_err(|e| e.to_string())?;
        let policy = self.scenario.duty_cycle;
        let targets: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].state.tank_id == tank_id)
            .collect();
        if let Some(&bad) = targets
            .iter()
            .find(|&&i| !policy.permits_periodic(self.nodes[i].airtime_s, interval_s))
        {
            return Err(format!(
                "interval violates duty cycle for node {}",
                self.nodes[bad].state.node_id
            ));
        }
        for i in targets {
            self.nodes[i].interval_s = interval_s;
        }
        Ok(())
    }

    /// Death is logged at the event time so the trace stays ordered; a node
    /// that browns out mid-wake is reported at that wake.
    fn record_death_if_any(&mut self, node: usize, at: SimTime) {
        let rt = &mut self.nodes[node];
        if rt.state.died_at.is_some() {
            rt.generation += 1;
            let id = rt.state.node_id;
            self.emit(TraceRecord::new(at.as_secs_f64(), TraceKind::Death).node(id));
        }
    }

    fn wake<H: RunHooks + ?Sized>(&mut self, node: usize, at: SimTime, hooks: &mut H) {
        let epoch = self.scenario.start_epoch_s;
        let rt = &mut self.nodes[node];
        let tank = self
            .farm
            .tanks
            .get(&rt.state.tank_id)
            .expect("validated tank id");
        let Some(frame) = rt.state.wake_and_transmit(tank, at, epoch, &mut self.sensor_rng) else {
            self.record_death_if_any(node, at);
            return;
        };
        let wire = encode(&frame).expect("scenario validation bounds the frame size");
        let rssi = rt.rssi_dbm;
        let loss_p = self.scenario.loss_probability;
        let result = if rssi < self.scenario.radio.rx_sensitivity_dbm {
            outcome::LOST_RSSI
        } else if loss_p > 0.0 && self.channel_rng.random::<f64>() < loss_p {
            outcome::LOST_RANDOM
        } else {
            outcome::DELIVERED
        };

        let mut rec = TraceRecord::new(at.as_secs_f64(), TraceKind::Tx)
            .node(frame.node_id)
            .outcome(result);
        rec.seq = Some(frame.seq);
        rec.rssi_dbm = Some(rssi);

        let next = schedule_next_wake(at, rt.interval_s, &self.scenario.duty_cycle, rt.airtime_s)
            .expect("intervals are validated against the duty-cycle policy");
        rt.generation += 1;
        let generation = rt.generation;
        let depletion = rt.state.depletion_time();

        self.emit(rec);
        if result == outcome::DELIVERED {
            hooks.on_delivery(at, &wire, rssi);
        }

        match depletion {
            Some(d) if d < next => self.schedule(d, Event::Depleted { node, generation }),
            _ => self.schedule(next, Event::Wake { node, generation }),
        }
    }
}

/// Convenience wrapper: validate, build and run a scenario offline.
pub fn run(scenario: ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    Ok(Engine::new(scenario)?.run())
}
