//! Scenario loading, the closed-loop simulation runner and its outputs.

pub mod plot;
pub mod run;
pub mod scenario;

pub use run::{batch, run, write_outputs, BatchReport, FailureKind, RunLogs, RunReport};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
