//! LoRa gateway relay: decodes radio frames, posts telemetry to the service,
//! buffers through uplink outages, and relays operator commands.

pub mod buffer;
pub mod client;
pub mod relay;
pub mod runner;
pub mod sim;

pub use buffer::DtnBuffer;
pub use client::{HttpClient, OutageClient, ServiceClient, UplinkSwitch};
pub use relay::{Relay, RelayOutcome, RelayStats};
