//! Scenario orchestration: mission simulation, diagnosis sessions, Monte Carlo campaigns and
//! confusion-matrix metrics.

mod campaign;
mod compare;
pub mod io;
mod metrics;
mod run;
mod scenario;

pub use campaign::{
    condition_index, fdt_table, monte_carlo, sweep, workers_from_env, write_campaign, Campaign, CampaignResult, FdtCell,
    FdtSpec, FdtTable, RbeeMagnitude, RbeeSpec, RunFailure, RunSummary, SweepPoint, WORKERS_ENV,
};
pub use compare::{compare, Comparison, ComparisonRow};
pub use metrics::{metrics, ConfusionMatrix, Metrics, Ratio, CONDITION_LABELS, NO_FAULT};
pub use run::{diagnose, estimate_severity, make_source, run_scenario, simulate, FaultOutcome, RecordedRun, RunOutput, SeriesRecord, SeverityReport};
pub use scenario::{sensor_channel, BaselineUpdate, FaultSpec, ProfileRef, RecordOptions, Scenario, SensorRef, Workbench};
