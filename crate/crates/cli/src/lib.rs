//! Config-driven experiment runner: every simulation and optimization
//! operation as a subcommand that emits CSV.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use pulseforge::gatelab::GateError;
use pulseforge::optimizer::OptimError;
use pulseforge::presets::PresetError;
use thiserror::Error;

pub use commands::{execute, Command, Outcome};
pub use config::{load_config, parse_config, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FINDINGS: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("preset error: {0}")]
    Preset(#[from] PresetError),
    #[error("simulation failed {0}")]
    Gate(#[from] GateError),
    #[error("optimization failed: {0}")]
    Optim(#[from] OptimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Preset(_) | Self::Optim(OptimError::BadPopulation(_)) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}
