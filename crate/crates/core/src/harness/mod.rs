//! Experiment configuration, sweeps, significance-adjusted ranking and the
//! report bundle.

mod config;
mod ranking;
mod report;
mod sweep;

pub use config::{DisruptionTemplate, ExperimentConfig, Resolved, ScenarioManifest};
pub use ranking::{rank_controllers, Metric, PairTest, RankCell, RankEntry, RankingTable};
pub use report::{emit_reports, ReportContext};
pub use sweep::{
    restrict_history, run_cell, run_sweep, sweep_keys, CellKey, CellMetrics, CellOutcome, CellRecord, CellTiming,
    SweepOptions, SweepResults,
};
