//! Configuration, persistence, metrics and the command implementations
//! behind the `svc-decoder` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod log;
pub mod metrics;

pub use checkpoint::{Checkpoint, Role};
pub use config::Config;
pub use log::Logger;
