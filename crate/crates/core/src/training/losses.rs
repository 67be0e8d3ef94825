use std::f64::consts::PI;

use super::data::step_batches;
use super::model::PsdSettings;
use super::{Result, StepBatch, TrainError};
use crate::autodiff::{Graph, Tensor, Var};
use crate::cells::{cell_step, readout, AffineHead, CellParams, InternalState};
use crate::predictive_state::{batch_targets, psd_loss};

/// A sequence loss together with the states that produced it, so the
/// predictive-state term can reuse the same unroll.
#[derive(Clone, Debug)]
pub struct SequenceLoss {
    /// Sum over time, averaged over trajectories in the batch.
    pub loss: Var,
    pub states: Vec<InternalState>,
    /// Live `(trajectory, t)` pairs that contributed.
    pub active: usize,
    pub rows: usize,
}

fn supervised(
    g: &mut Graph,
    cell: &CellParams,
    head: &AffineHead,
    batch: &StepBatch,
) -> Result<SequenceLoss> {
    let rows = batch.rows();
    let mut state = InternalState::zeros(g, cell.kind, rows, cell.hidden_size);
    let mut states = Vec::with_capacity(batch.inputs.len());
    let mut total: Option<Var> = None;
    for ((x, y), w) in batch.inputs.iter().zip(&batch.targets).zip(&batch.weights) {
        let xv = g.constant(x.clone());
        state = cell_step(g, cell, state, xv)?;
        states.push(state);
        let pred = readout(g, head, &state)?;
        let term = g.weighted_sse(pred, y, w)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    let sum = total.ok_or(TrainError::EmptyBatch)?;
    Ok(SequenceLoss {
        loss: g.scale(sum, 1.0 / rows as f64)?,
        states,
        active: batch.active,
        rows,
    })
}

fn check_lengths(seqs: &[&[Vec<f64>]]) -> Result<()> {
    if seqs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    match seqs.iter().position(|s| s.len() < 2) {
        Some(index) => Err(TrainError::TooShort {
            index,
            len: seqs[index].len(),
        }),
        None => Ok(()),
    }
}

/// One-step-ahead prediction: `Σ_t ‖x_{t+1} − readout(h_t)‖²`, where `h_t`
/// has consumed `x_0..=x_t`.
pub fn filtering_loss(
    g: &mut Graph,
    cell: &CellParams,
    head: &AffineHead,
    observations: &[&[Vec<f64>]],
) -> Result<SequenceLoss> {
    check_lengths(observations)?;
    let inputs: Vec<&[Vec<f64>]> = observations.iter().map(|s| &s[..s.len() - 1]).collect();
    let targets: Vec<&[Vec<f64>]> = observations.iter().map(|s| &s[1..]).collect();
    let batch = step_batches(&inputs, &targets)?;
    supervised(g, cell, head, &batch)
}

/// Behavior cloning: `Σ_t ‖a_t − readout(h_t)‖²`.
pub fn imitation_loss(
    g: &mut Graph,
    cell: &CellParams,
    head: &AffineHead,
    observations: &[&[Vec<f64>]],
    actions: &[Option<&[Vec<f64>]>],
) -> Result<SequenceLoss> {
    if observations.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let acts = actions
        .iter()
        .enumerate()
        .map(|(i, a)| a.ok_or(TrainError::MissingActions(i)))
        .collect::<Result<Vec<_>>>()?;
    let batch = step_batches(observations, &acts)?;
    supervised(g, cell, head, &batch)
}

/// Predictive-state term over an existing unroll, averaged over the batch
/// like the task loss. Returns the term and the number of windows used.
pub fn psd_term(
    g: &mut Graph,
    decoder: &AffineHead,
    states: &[InternalState],
    observations: &[&[Vec<f64>]],
    settings: &PsdSettings,
) -> Result<(Var, usize)> {
    let targets = batch_targets(observations, settings.k, &settings.featurizer())?;
    let windows = targets.iter().map(|t| t.active_rows()).sum();
    let r = psd_loss(g, decoder, states, &targets)?;
    Ok((g.scale(r, 1.0 / observations.len() as f64)?, windows))
}

/// Row-wise `log N(a; μ, diag(σ²))` per action dimension, `[B × A]`; sum the
/// columns for the joint log-density.
pub fn gaussian_log_prob(g: &mut Graph, mean: Var, log_std: Var, actions: &Tensor) -> Result<Var> {
    let a = g.constant(actions.clone());
    let diff = g.sub(a, mean)?;
    let neg = g.scale(log_std, -1.0)?;
    let inv_std = g.exp(neg)?;
    let z = g.mul(diff, inv_std)?;
    let sq = g.mul(z, z)?;
    let half = g.scale(sq, -0.5)?;
    let centred = g.sub(half, log_std)?;
    Ok(g.add_scalar(centred, -0.5 * (2.0 * PI).ln())?)
}

/// `Σ_{s ≥ t} r_s` for each `t`.
pub fn reward_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc += r;
        *o = acc;
    }
    out
}

/// Reward-to-go of every visited step, centred by the batch mean and divided
/// by the batch std.
pub fn normalized_advantages(returns_to_go: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = returns_to_go.iter().flatten().copied().collect();
    if all.is_empty() {
        return returns_to_go.to_vec();
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let std = (all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 0.0 };
    returns_to_go
        .iter()
        .map(|ep| ep.iter().map(|v| (v - mean) * scale).collect())
        .collect()
}

/// REINFORCE surrogate `−(1/N) Σ_t Σ_b Â_{t,b} log π(a_{t,b} | h_{t,b})`.
///
/// `advantages[t][b]` must be zero for rows whose episode ended before `t`.
pub fn pg_loss(
    g: &mut Graph,
    means: &[Var],
    log_std: Var,
    actions: &[Tensor],
    advantages: &[Vec<f64>],
    episodes: usize,
) -> Result<Var> {
    if means.is_empty() || episodes == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let mut total: Option<Var> = None;
    for ((&mean, act), adv) in means.iter().zip(actions).zip(advantages) {
        let logp = gaussian_log_prob(g, mean, log_std, act)?;
        let dims = act.cols();
        let w: Vec<f64> = adv
            .iter()
            .flat_map(|a| std::iter::repeat_n(-a / episodes as f64, dims))
            .collect();
        let term = g.weighted_sum(logp, w)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    total.ok_or(TrainError::EmptyBatch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::cells::{CellKind, HeadRole};

    #[test]
    fn gaussian_log_prob_at_mean_with_unit_std() {
        let mut g = Graph::new();
        let log_std = g.param("log_std", Tensor::zeros(vec![3])).unwrap();
        let mean = g.constant(Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        let lp = gaussian_log_prob(
            &mut g,
            mean,
            log_std.var(),
            &Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap(),
        )
        .unwrap();
        let total: f64 = g.value(lp).data().iter().sum();
        assert!((total - (-0.5 * 3.0 * (2.0 * PI).ln())).abs() < 1e-12);
    }

    #[test]
    fn rewards_to_go() {
        assert_eq!(reward_to_go(&[1.0, 2.0, 3.0]), vec![6.0, 5.0, 3.0]);
        assert!(reward_to_go(&[]).is_empty());
    }

    #[test]
    fn advantages_are_standardized() {
        let adv = normalized_advantages(&[vec![3.0, 2.0, 1.0], vec![1.0]]);
        let flat: Vec<f64> = adv.iter().flatten().copied().collect();
        let mean = flat.iter().sum::<f64>() / 4.0;
        let var = flat.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert_eq!(
            normalized_advantages(&[vec![2.0, 2.0]]),
            vec![vec![0.0, 0.0]]
        );
    }

    #[test]
    fn zero_advantages_give_zero_policy_gradient() {
        let mut g = Graph::new();
        let cell = CellParams::init(&mut g, CellKind::Gru, 2, 3, 1).unwrap();
        let head = AffineHead::init(&mut g, HeadRole::Readout, 3, 1, 1).unwrap();
        let log_std = g.param("log_std", Tensor::zeros(vec![1])).unwrap();
        let mut state = InternalState::zeros(&mut g, CellKind::Gru, 2, 3);
        let mut means = Vec::new();
        for t in 0..3 {
            let x = g.constant(Tensor::matrix(2, 2, vec![0.1 * t as f64, 0.2, -0.3, 0.4]).unwrap());
            state = cell_step(&mut g, &cell, state, x).unwrap();
            means.push(readout(&mut g, &head, &state).unwrap());
        }
        let acts = vec![Tensor::matrix(2, 1, vec![0.3, -0.2]).unwrap(); 3];
        let loss = pg_loss(
            &mut g,
            &means,
            log_std.var(),
            &acts,
            &vec![vec![0.0, 0.0]; 3],
            2,
        )
        .unwrap();
        g.backward(loss).unwrap();
        for id in g.param_ids().collect::<Vec<_>>() {
            assert!(g.param_grad(id).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn imitation_single_step_arithmetic() {
        let mut g = Graph::new();
        let cell = CellParams::init(&mut g, CellKind::Basic, 1, 2, 0).unwrap();
        let head = AffineHead::init(&mut g, HeadRole::Readout, 2, 1, 0).unwrap();
        // zero readout weights make the prediction exactly 0
        g.param_value_mut(head.weight).data_mut().fill(0.0);
        let obs = vec![vec![0.7]];
        let acts = vec![vec![1.0]];
        let out = imitation_loss(&mut g, &cell, &head, &[&obs], &[Some(&acts)]).unwrap();
        assert_eq!(g.value(out.loss).item(), 1.0);
        assert!(matches!(
            imitation_loss(&mut g, &cell, &head, &[&obs], &[None]),
            Err(TrainError::MissingActions(0))
        ));
    }

    #[test]
    fn filtering_rejects_short_trajectories() {
        let mut g = Graph::new();
        let cell = CellParams::init(&mut g, CellKind::Basic, 1, 2, 0).unwrap();
        let head = AffineHead::init(&mut g, HeadRole::Readout, 2, 1, 0).unwrap();
        let obs = vec![vec![0.7]];
        assert!(matches!(
            filtering_loss(&mut g, &cell, &head, &[&obs]),
            Err(TrainError::TooShort { index: 0, len: 1 })
        ));
    }

    #[test]
    fn filtering_zero_observations_zero_network() {
        let mut g = Graph::new();
        let cell = CellParams::init(&mut g, CellKind::Gru, 2, 4, 0).unwrap();
        let head = AffineHead::init(&mut g, HeadRole::Readout, 4, 2, 0).unwrap();
        let obs = vec![vec![0.0, 0.0]; 10];
        let out = filtering_loss(&mut g, &cell, &head, &[&obs, &obs]).unwrap();
        assert_eq!(g.value(out.loss).item(), 0.0);
        assert_eq!(out.active, 18);
    }
}
