//! Experiment runner for `domkl-core`: TOML configs, CSV data and results,
//! multi-trial simulation and the `domkl` command.

pub mod cli;
pub mod config;
mod error;
pub mod io;
pub mod simulator;

pub use error::{SimError, SimResult};
