use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::autodiff::Tensor;

/// Per-dimension standardization fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Mean and population std of `rows`; near-constant dimensions keep
    /// unit scale.
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a Vec<f64>>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in rows {
            n += 1;
            for (i, v) in row.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / nf - m * m).max(0.0);
                if var.sqrt() > 1e-8 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_all(&self, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        seq.iter().map(|r| self.apply(r)).collect()
    }
}

/// Time-major padded batch: entry `t` holds `[B × D]` inputs and targets,
/// with row weight 0 where a trajectory has already ended.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatch {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
    pub weights: Vec<Vec<f64>>,
    /// Number of live `(row, t)` pairs.
    pub active: usize,
}

impl StepBatch {
    pub fn rows(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// Pairs `inputs[r][t]` with `targets[r][t]`; each row's two sequences must
/// have equal length.
pub fn step_batches(inputs: &[&[Vec<f64>]], targets: &[&[Vec<f64>]]) -> Result<StepBatch> {
    let rows = inputs.len();
    if rows == 0 || targets.len() != rows {
        return Err(TrainError::EmptyBatch);
    }
    let in_dim = inputs[0].first().map_or(0, Vec::len);
    let out_dim = targets[0].first().map_or(0, Vec::len);
    let steps = inputs.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut batch = StepBatch {
        inputs: Vec::with_capacity(steps),
        targets: Vec::with_capacity(steps),
        weights: Vec::with_capacity(steps),
        active: 0,
    };
    for t in 0..steps {
        let mut x = vec![0.0; rows * in_dim];
        let mut y = vec![0.0; rows * out_dim];
        let mut w = vec![0.0; rows];
        for r in 0..rows {
            debug_assert_eq!(inputs[r].len(), targets[r].len());
            if t < inputs[r].len() {
                x[r * in_dim..(r + 1) * in_dim].copy_from_slice(&inputs[r][t]);
                y[r * out_dim..(r + 1) * out_dim].copy_from_slice(&targets[r][t]);
                w[r] = 1.0;
                batch.active += 1;
            }
        }
        batch.inputs.push(Tensor::matrix(rows, in_dim, x)?);
        batch.targets.push(Tensor::matrix(rows, out_dim, y)?);
        batch.weights.push(w);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_standardizes_and_inverts() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Scaler::fit(2, &rows);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(s.invert(&[1.0, 0.0]), vec![3.0, 5.0]);
    }

    #[test]
    fn ragged_rows_are_masked() {
        let a = vec![vec![1.0], vec![2.0], vec![3.0]];
        let b = vec![vec![4.0]];
        let batch = step_batches(&[&a, &b], &[&a, &b]).unwrap();
        assert_eq!(batch.inputs.len(), 3);
        assert_eq!(
            batch.weights,
            vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]
        );
        assert_eq!(batch.active, 4);
        assert_eq!(batch.inputs[1].data(), &[2.0, 0.0]);
    }
}
