//! Experiment driver: offline training, the online fine-tuning loop,
//! evaluation, sweeps and plots.

pub mod config;
pub mod plot;
pub mod run;
pub mod sweep;

pub use config::{AgentKind, DemoConfig, ExperimentConfig, Schedule};
pub use run::{
    evaluate, evaluate_with, run_offline, run_online, run_seed, Agent, Bundle, BundleFile, EvalResult, ExpertData,
    MetricsRow, OnlineReport,
};
pub use sweep::{read_csv, rows_for_run, run_sweep, write_csv, RowKind, SweepAxis, SweepReport, SweepRow, SweepSpec};
