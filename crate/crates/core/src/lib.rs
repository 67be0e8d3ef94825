//! Recurrent networks trained with a predictive-state decoder loss.
//!
//! The crate is layered bottom-up:
//!
//! * [`autodiff`]: a reverse-mode tape over dense `f64` tensors.
//! * [`cells`]: basic RNN, GRU and LSTM cells plus affine heads.
//! * [`predictive_state`]: future windows, featurizers and the decoder loss.
//! * [`envs`]: seeded simulators and dataset files.
//! * [`training`]: task losses, Adam and the training loop.
//! * [`harness`]: config parsing, sweeps, statistics and reports.

pub mod autodiff;
pub mod cells;
pub mod envs;
pub mod format;
pub mod harness;
pub mod parallel;
pub mod predictive_state;
pub mod rng;
pub mod training;

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Top-level error; each variant maps to a short category used by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),
    #[error(transparent)]
    Cell(#[from] cells::CellError),
    #[error(transparent)]
    Psd(#[from] predictive_state::PsdError),
    #[error(transparent)]
    Env(#[from] envs::EnvError),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Config(#[from] harness::ConfigError),
    #[error(transparent)]
    Stats(#[from] harness::StatsError),
    #[error(transparent)]
    Report(#[from] harness::ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Autodiff(_) | Error::Cell(_) | Error::Psd(_) => "model",
            Error::Env(_) => "env",
            Error::Train(training::TrainError::Diverged { .. }) => "divergence",
            Error::Train(_) => "train",
            Error::Config(_) => "config",
            Error::Stats(_) => "stats",
            Error::Report(_) => "report",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
