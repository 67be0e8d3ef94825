//! Predictive-state supervision: future windows, featurization and the
//! decoder loss `R = Σ_t ‖F(h_t) − φ([x_{t+1}; …; x_{t+k}])‖²`.
//!
//! `h_t` is the state after consuming `x_t`, so every target lies strictly in
//! the future of what the network has seen. Windows that would run past the
//! end of a trajectory are dropped, never padded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::cells::{decode, AffineHead, CellError, InternalState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdError {
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("featurizer expects window length {expected}, got {found}")]
    WindowLength { expected: usize, found: usize },
    #[error("{targets} predictive targets but only {states} states")]
    Misaligned { states: usize, targets: usize },
    #[error("lambda must be a finite non-negative number, got {0}")]
    NegativeLambda(f64),
    #[error("horizon k must be at least 1")]
    ZeroHorizon,
    #[error("unknown featurizer '{0}'")]
    UnknownFeaturizer(String),
}

pub type Result<T> = std::result::Result<T, PsdError>;

/// `[x_{t+1}; …; x_{t+k}]` for the state at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FutureWindow {
    pub t: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

/// All complete windows of horizon `k`, for `t = 0 ..= T − k − 1`.
pub fn extract_windows(observations: &[Vec<f64>], k: usize) -> Result<Vec<FutureWindow>> {
    if k == 0 {
        return Err(PsdError::ZeroHorizon);
    }
    let n = observations.len().saturating_sub(k);
    Ok((0..n)
        .map(|t| FutureWindow {
            t,
            k,
            values: observations[t + 1..=t + k]
                .iter()
                .flatten()
                .copied()
                .collect(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeaturizerKind {
    Identity,
    SecondOrder,
}

impl fmt::Display for FeaturizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeaturizerKind::Identity => "identity",
            FeaturizerKind::SecondOrder => "second-order",
        })
    }
}

impl FromStr for FeaturizerKind {
    type Err = PsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(FeaturizerKind::Identity),
            "second-order" | "second_order" | "second" => Ok(FeaturizerKind::SecondOrder),
            other => Err(PsdError::UnknownFeaturizer(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Featurizer {
    pub kind: FeaturizerKind,
    pub input_len: usize,
}

/// Featurized window; the constant supervision target for one state.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveTarget {
    pub values: Vec<f64>,
}

impl Featurizer {
    pub fn new(kind: FeaturizerKind, input_len: usize) -> Self {
        Self { kind, input_len }
    }

    pub fn output_len(&self) -> usize {
        let m = self.input_len;
        match self.kind {
            FeaturizerKind::Identity => m,
            FeaturizerKind::SecondOrder => m + m * m,
        }
    }

    /// Identity, or `[w ; vec(w wᵀ)]` with `vec` in row-major order.
    pub fn featurize(&self, window: &FutureWindow) -> Result<PredictiveTarget> {
        let w = &window.values;
        if w.len() != self.input_len {
            return Err(PsdError::WindowLength {
                expected: self.input_len,
                found: w.len(),
            });
        }
        let mut values = w.clone();
        if self.kind == FeaturizerKind::SecondOrder {
            values.reserve(w.len() * w.len());
            for a in w {
                values.extend(w.iter().map(|b| a * b));
            }
        }
        Ok(PredictiveTarget { values })
    }
}

/// Targets for one timestep across a batch. Rows whose trajectory has no
/// complete window at this step carry zero weight.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBatch {
    pub values: Tensor,
    pub weights: Vec<f64>,
}

impl TargetBatch {
    pub fn active_rows(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }
}

/// Builds aligned per-timestep targets for a ragged batch of observation
/// sequences. Entry `t` of the result supervises the states at time `t`.
pub fn batch_targets(
    sequences: &[&[Vec<f64>]],
    k: usize,
    featurizer: &Featurizer,
) -> Result<Vec<TargetBatch>> {
    let rows = sequences.len();
    let width = featurizer.output_len();
    let per_row: Vec<Vec<PredictiveTarget>> = sequences
        .iter()
        .map(|seq| {
            extract_windows(seq, k)?
                .iter()
                .map(|w| featurizer.featurize(w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let steps = per_row.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut data = vec![0.0; rows * width];
        let mut weights = vec![0.0; rows];
        for (r, targets) in per_row.iter().enumerate() {
            if let Some(target) = targets.get(t) {
                data[r * width..(r + 1) * width].copy_from_slice(&target.values);
                weights[r] = 1.0;
            }
        }
        out.push(TargetBatch {
            values: Tensor::matrix(rows, width, data)?,
            weights,
        });
    }
    Ok(out)
}

/// Sum over aligned timesteps of the (row-weighted) squared decoding error.
/// Gradients reach both the decoder and, through the states, the cell.
pub fn psd_loss(
    g: &mut Graph,
    decoder: &AffineHead,
    states: &[InternalState],
    targets: &[TargetBatch],
) -> Result<Var> {
    if targets.len() > states.len() {
        return Err(PsdError::Misaligned {
            states: states.len(),
            targets: targets.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (state, target) in states.iter().zip(targets) {
        if target.values.cols() != decoder.output {
            return Err(CellError::Dimension {
                what: "decoder output",
                expected: decoder.output,
                found: target.values.cols(),
            }
            .into());
        }
        let pred = decode(g, decoder, state)?;
        let term = g.weighted_sse(pred, &target.values, &target.weights)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    Ok(match total {
        Some(v) => v,
        None => g.constant(Tensor::scalar(0.0)),
    })
}

/// `L + λR`.
pub fn joint_loss(g: &mut Graph, task: Var, r: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PsdError::NegativeLambda(lambda));
    }
    let weighted = g.scale(r, lambda)?;
    Ok(g.add(task, weighted)?)
}
