//! Scenarios, experiment runner, metrics and exports.

pub mod canonical;
pub mod export;
pub mod metrics;
pub mod runner;
pub mod scenario;

pub use metrics::MetricsReport;
pub use runner::{compare, run, sweep, Comparison, RunOutput, RunReport, Stats, Sweep};
pub use scenario::{Mode, Scenario};
