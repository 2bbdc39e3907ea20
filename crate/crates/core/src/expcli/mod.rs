//! The experiment runner behind the `bihem` binary.
//!
//! An experiment has two stages. `meta-train` produces the frozen right
//! hemisphere and the right-only baseline with RL². `main` trains the
//! bi-hemispheric agent and the left-only baseline on every task and seed,
//! and evaluates the non-learning baselines. `eval` measures within-trial
//! adaptation of the meta-trained networks on held-out sub-tasks, and
//! `report` turns the persisted CSVs into summary tables and SVG plots.
//!
//! Every cell (stage, task, agent, seed) gets its own derived seed and a
//! JSON run record; re-running a stage skips cells whose record matches the
//! current settings.

mod config;
mod report;
mod runner;
pub mod svg;

pub use config::{
    ExperimentConfig, MainStage, MetaTrainStage, MetricsConfig, NetworkSizes, PpoOverride,
    TaskOverride, OUTPUT_DIR_ENV,
};
pub use report::{run_report, seed_band, AggregateRow, BandPoint, ReportOutput, SummaryRow};
pub use runner::{
    run_eval, run_main, run_meta_train, AdaptationRow, CellStatus, EpisodeRow, RunRecord,
    StageSummary, Workspace, ARTIFACT_VERSION, CONFIG_SNAPSHOT,
};
