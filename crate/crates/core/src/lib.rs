pub mod cli;
pub mod denoiser;
pub mod error;
pub mod features;
pub mod numcore;
pub mod oracle;
pub mod sampler;
pub mod schedule;
pub mod training;

pub use error::{Error, Result};
