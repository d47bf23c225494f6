//! Deterministic engine for a desk-scale digital-home hub.
//!
//! Everything here is synchronous and driven by explicit timestamps, so a
//! simulated run produces the same event log every time. The `hubd` crate
//! puts the network front ends around [`hub::Hub`].

pub mod automation;
pub mod clock;
pub mod config;
pub mod control;
pub mod desktop;
pub mod event;
pub mod fields;
pub mod grammar;
pub mod home;
pub mod hub;
pub mod mobile;
pub mod scenario;
pub mod security;
pub mod surveillance;

pub use clock::{Timestamp, DEFAULT_SIM_EPOCH};
pub use config::HubConfig;
pub use event::{replay, EventLog, HubSnapshot};
pub use hub::{Hub, HubError, LineOutcome, Outbound};
