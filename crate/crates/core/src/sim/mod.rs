//! Scenario runner: configuration, deterministic simulation loop,
//! telemetry logging with CSV/JSON export, and the stability-bound
//! monitors that turn the theoretical guarantees into runnable checks.

mod config;
mod log;
mod monitor;
mod runner;

pub use config::{preset_config, 
    L1Config, MSpec, PathSource, ScenarioConfig, TfSpec, CONFIG_SCHEMA_VERSION,
};
pub use log::{
    parse_csv, to_csv_string, validate_against_schema, LogRow, Metrics, RunLog,
    LOG_SCHEMA_VERSION, METRICS_SCHEMA_JSON,
};
pub use monitor::{bound_monitor, BoundCheckParams, BoundReport, ConditionCheck};
pub use runner::{run, run_with_mode, ts_sweep, RunMode, SweepReport, SweepRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Path(#[from] crate::path::PathError),
    #[error(transparent)]
    Pf(#[from] crate::pf::PfError),
    #[error(transparent)]
    L1(#[from] crate::l1::L1Error),
    #[error("numerical divergence at step {step} (t = {t}); last good state logged")]
    NumericalDivergence { step: usize, t: f64 },
    #[error("log parse error: {0}")]
    LogParse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
