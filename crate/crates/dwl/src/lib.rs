//! Command-line driver for `dwl-core`: config files and overrides,
//! checkpoints, threaded rollouts and CSV outputs.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod records;
pub mod runner;

pub use error::{CliError, Result};
