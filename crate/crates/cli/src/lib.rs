//! Experiment runner: data preparation, staged training, generation,
//! scoring, few-shot sweeps and human-evaluation packets, all rooted in one
//! experiment directory with a content manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod layout;
pub mod manifest;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
