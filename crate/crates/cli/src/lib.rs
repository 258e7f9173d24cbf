//! Configuration-driven runs of the qubit HEOM solver: evolution traces,
//! steady states, parameter sweeps, emission spectra and oracle checks.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, parse_with, ConfigError, ExperimentConfig, Overrides, RunKind};
pub use runner::{run_experiment, RunError, RunSummary};
