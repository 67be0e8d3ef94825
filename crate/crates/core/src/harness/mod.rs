//! Experiment harness: configs, sweeps, statistics and reports.

pub mod config;
pub mod report;
pub mod stats;
pub mod sweep;

pub use config::{ConfigBuilder, ConfigError, ExperimentConfig};
pub use report::{load_run, report, summarize, Direction, Report, ReportError, RunEntry};
pub use stats::{wilcoxon_signed_rank, StatsError, Wilcoxon};
pub use sweep::{run_dir_name, run_sweep, SweepOutcome, SweepPlan, SweepRun};
