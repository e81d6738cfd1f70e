//! Scenario runner behind the `fpme` binary.

pub mod config;
pub mod scenario;

pub use config::{load_config, load_sweep, parse_config, ScenarioConfig, ScenarioKind};
pub use scenario::{
    exit_code, run_scenario, series_csv, RunReport, EXIT_BLOWUP, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, SERIES_HEADER,
};
