//! Orchestration of the riskfuse pipeline: configuration, per-stage run
//! manifests with freshness checks, and CSV report tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

pub use commands::{run, Command, EvalRow, Layout, ReliabilitySummary, StageOutcome};
pub use config::RunConfig;
pub use error::CliError;
pub use manifest::Manifest;

use std::path::Path;

/// Loads the config at `config_path` and runs `command`.
pub fn run_command(command: Command, config_path: &Path, force: bool) -> Result<Vec<StageOutcome>, CliError> {
    let cfg = RunConfig::load(config_path)?;
    run(&cfg, command, force)
}
