//! Task objectives, the optimizer and the training loop.
//!
//! Losses are optimized as per-trajectory averages of sums over time
//! (`Σ_t ‖·‖²`, averaged over the minibatch) and reported in metrics files
//! as per-step means.

mod data;
mod losses;
mod metrics;
mod model;
mod optim;
mod rollout;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor};
use crate::cells::CellError;
use crate::envs::EnvError;
use crate::predictive_state::PsdError;

pub use data::{step_batches, Scaler, StepBatch};
pub use losses::{
    filtering_loss, gaussian_log_prob, imitation_loss, normalized_advantages, pg_loss, psd_term,
    reward_to_go, SequenceLoss,
};
pub use metrics::{MetricRow, RunMetrics, Split, METRICS_HEADER};
pub use model::{Model, PsdSettings};
pub use optim::{adam_step, clip_global_norm, Adam, AdamConfig, CLIP_NORM};
pub use rollout::{rollout_policy, ActionMap, PolicyMode, RolloutBatch};
pub use trainer::{train, RunOutcome, RunSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Filter,
    Imitate,
    Pg,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Filter => "filter",
            Task::Imitate => "imitate",
            Task::Pg => "pg",
        })
    }
}

impl FromStr for Task {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filter" => Ok(Task::Filter),
            "imitate" => Ok(Task::Imitate),
            "pg" => Ok(Task::Pg),
            other => Err(TrainError::UnknownTask(other.to_string())),
        }
    }
}

/// Parameters saved at the end of the last epoch that completed cleanly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: Vec<(String, Tensor)>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Psd(#[from] PsdError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("trajectory {index} has {len} steps; at least 2 are required")]
    TooShort { index: usize, len: usize },
    #[error("trajectory {0} has no actions")]
    MissingActions(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: {cause}; last good checkpoint is from epoch {}", last_good.epoch)]
    Diverged {
        epoch: usize,
        cause: String,
        last_good: Box<Checkpoint>,
    },
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

impl TrainError {
    /// Numeric blow-ups that should abort a run with a checkpoint.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient(_)
                | TrainError::Autodiff(AutodiffError::NonFinite { .. })
                | TrainError::Cell(CellError::Autodiff(AutodiffError::NonFinite { .. }))
                | TrainError::Psd(PsdError::Autodiff(AutodiffError::NonFinite { .. }))
                | TrainError::Psd(PsdError::Cell(CellError::Autodiff(
                    AutodiffError::NonFinite { .. }
                )))
        )
    }
}
