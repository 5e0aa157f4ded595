//! Core model for a LoRa aquaculture sensor network: link budget and
//! survey fitting, LoRa airtime and duty cycle, the binary sensor frame,
//! tank water-quality dynamics, node power accounting, and a deterministic
//! discrete-event simulator with a replayable trace.

pub mod crc;
pub mod engine;
pub mod farm;
pub mod frame;
pub mod link;
pub mod node;
pub mod scenario;
pub mod survey;
pub mod telemetry;
pub mod time;
pub mod trace;
