//! Experiment orchestration: config ingestion, deterministic runners, and
//! CSV/JSON report emission for the `varpo` CLI.

pub mod config;
pub mod report;
pub mod runners;
pub mod scenarios;

pub use config::{ExperimentConfig, PairRecord, ReportFormat, ScenarioFile};
pub use report::{config_hash, Histogram, MetricRow, ReportRecord};
pub use runners::{
    run_experiment, write_outcome, CheckResult, ExperimentKind, RunOptions, RunOutcome,
};
pub use scenarios::{population_env, risk_scenario_suite, three_arm};
