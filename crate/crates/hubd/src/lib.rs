//! The hub daemon: network front ends around the `hub-core` engine.

pub mod actor;
pub mod agent;
pub mod client;
pub mod control;
pub mod http;
pub mod server;

pub use actor::{ClockMode, HubHandle};
pub use server::{start, Options, Running, StartError};
