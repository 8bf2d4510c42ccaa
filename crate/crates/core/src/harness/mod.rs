//! Config-driven experiments, run summaries, comparisons and the self-check.

mod compare;
mod config;
pub mod datasets;
pub mod invariants;
mod run;
mod selfcheck;
mod separability;
mod summary;

pub use compare::{compare_runs, Comparison, RunDigest};
pub use config::{DatasetSection, DiagnosticsSection, ExperimentConfig, OutputSection};
pub use run::{
    oracle_comparison, prepare, read_checkpoints, read_json, run_experiment, terminal_h_inf, Prepared, RunOptions,
    RunOutput, SavedState, CHECKPOINTS_FILE, STATE_FILE, SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use selfcheck::{selfcheck, Fault, SelfcheckReport};
pub use separability::check_separable;
pub use summary::{
    InvariantMap, InvariantResult, KktTrend, OracleComparison, RunStatus, RunSummary, Status,
};
