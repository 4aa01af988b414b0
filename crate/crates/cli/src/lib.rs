//! Batch runner for the qmzk scenarios: load a JSON scenario, run the
//! checks of its kind with fixed seeds, and render a report.

pub mod catalogue;
pub mod report;
pub mod runners;
pub mod scenario;

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

pub use catalogue::{catalogue, CatalogueEntry};
pub use report::{render, Check, Format, Relation, ScenarioReport};
pub use scenario::{Kind, Overrides, Params, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cap violation: {0}")]
    Cap(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario kind `{0}`")]
    UnknownKind(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Usage, parse and cap errors all exit with 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Validates and runs a scenario. Subprotocol failures end up in
/// `report.abort`, not in the error.
pub fn run(scenario: &Scenario) -> Result<ScenarioReport, CliError> {
    scenario.validate()?;
    let start = Instant::now();
    let mut checks = Vec::new();
    let abort = runners::run(scenario, &mut checks).err().map(|a| a.0);
    Ok(ScenarioReport {
        scenario: scenario.clone(),
        checks,
        abort,
        wall_time_s: start.elapsed().as_secs_f64(),
        version: VERSION.to_string(),
    })
}

pub fn run_scenario(path: &Path, overrides: Overrides) -> Result<ScenarioReport, CliError> {
    run(&Scenario::load(path)?.with_overrides(overrides))
}

/// Catalogue lookup by kind name.
pub fn list_invariants(kind: &str) -> Result<&'static [CatalogueEntry], CliError> {
    Ok(catalogue(Kind::parse(kind)?))
}
