//! Couples a simulation run to a relay: delivered frames go through the real
//! decode/post/buffer path and operator commands flow back into the farm.

use aquagreen_core::engine::RunHooks;
use aquagreen_core::frame::WireFrame;
use aquagreen_core::scenario::Uplink;
use aquagreen_core::telemetry::TankDirective;
use aquagreen_core::time::SimTime;
use std::time::{Duration, Instant};
use tracing::warn;

use crate::client::{OutageClient, ServiceClient, UplinkSwitch};
use crate::relay::Relay;

/// Holds simulated time to a multiple of wall-clock time.
#[derive(Debug, Clone)]
pub struct Pacer {
    start: Instant,
    speed: f64,
}

impl Pacer {
    pub fn new(speed: f64) -> Self {
        Self {
            start: Instant::now(),
            speed,
        }
    }

    pub fn wait_until(&self, at: SimTime) {
        let target = self.start + Duration::from_secs_f64(at.as_secs_f64() / self.speed);
        let now = Instant::now();
        if target > now {
            std::thread::sleep(target - now);
        }
    }
}

pub const MAX_POLL_BACKOFF_S: f64 = 300.0;

pub struct SimBridge<C: ServiceClient> {
    relay: Relay<OutageClient<C>>,
    switch: UplinkSwitch,
    uplink: Uplink,
    epoch_s: u32,
    poll_every_s: f64,
    next_poll: SimTime,
    backoff_s: f64,
    pacer: Option<Pacer>,
    buffered_at_start: usize,
    pub conservation_violations: u64,
    pub errors: Vec<String>,
}

impl<C: ServiceClient> SimBridge<C> {
    pub fn new(
        relay: Relay<OutageClient<C>>,
        switch: UplinkSwitch,
        uplink: Uplink,
        epoch_s: u32,
        poll_every_s: f64,
    ) -> Self {
        let buffered_at_start = relay.buffered();
        Self {
            relay,
            switch,
            uplink,
            epoch_s,
            poll_every_s,
            next_poll: SimTime::ZERO,
            backoff_s: poll_every_s,
            pacer: None,
            buffered_at_start,
            conservation_violations: 0,
            errors: Vec::new(),
        }
    }

    pub fn with_pacer(mut self, pacer: Pacer) -> Self {
        self.pacer = Some(pacer);
        self
    }

    pub fn relay(&self) -> &Relay<OutageClient<C>> {
        &self.relay
    }

    pub fn into_relay(self) -> Relay<OutageClient<C>> {
        self.relay
    }

    fn epoch_at(&self, at: SimTime) -> u64 {
        u64::from(self.epoch_s) + at.as_millis() / 1000
    }

    fn update_uplink(&mut self, at: SimTime) {
        let down = self.uplink.is_down(at.as_secs_f64());
        let was_down = self.switch.is_down();
        self.switch.set_down(down);
        if was_down && !down {
            if let Err(e) = self.relay.flush() {
                self.errors.push(format!("flush on reconnect: {e}"));
            }
        }
    }

    fn check_conservation(&mut self) {
        if !self.relay.is_conserved(self.buffered_at_start) {
            self.conservation_violations += 1;
        }
    }

    /// Restore the uplink and push out anything still buffered.
    pub fn finish(&mut self) -> usize {
        self.switch.set_down(false);
        match self.relay.flush() {
            Ok(n) => n,
            Err(e) => {
                self.errors.push(format!("final flush: {e}"));
                0
            }
        }
    }
}

impl<C: ServiceClient> RunHooks for SimBridge<C> {
    fn before_event(&mut self, at: SimTime) {
        if let Some(p) = &self.pacer {
            p.wait_until(at);
        }
        self.update_uplink(at);
    }

    fn on_delivery(&mut self, at: SimTime, frame: &WireFrame, rssi_dbm: f64) {
        let now = self.epoch_at(at);
        if let Err(e) = self.relay.relay(frame.as_bytes(), rssi_dbm, now) {
            self.errors.push(format!("relay at {at}: {e}"));
        }
        self.check_conservation();
    }

    fn poll_commands(&mut self, at: SimTime) -> Vec<TankDirective> {
        if at < self.next_poll {
            return Vec::new();
        }
        match self.relay.poll_commands() {
            Ok(cmds) => {
                self.backoff_s = self.poll_every_s;
                self.next_poll = at + self.poll_every_s;
                cmds.iter().map(TankDirective::from).collect()
            }
            Err(e) => {
                // Once per failure streak; the backoff is still at its base value.
                if !self.switch.is_down() && self.backoff_s == self.poll_every_s {
                    warn!(error = %e, "command poll failed");
                }
                self.next_poll = at + self.backoff_s;
                self.backoff_s = (self.backoff_s * 2.0).min(MAX_POLL_BACKOFF_S);
                Vec::new()
            }
        }
    }
}
