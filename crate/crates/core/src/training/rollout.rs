//! Closed-loop episodes of a recurrent policy on the partially observed
//! cart-pole, run in lockstep across a batch of episodes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::Scaler;
use super::model::Model;
use super::{Result, TrainError};
use crate::autodiff::{Tensor, Var};
use crate::cells::{cell_step, readout, InternalState};
use crate::envs::{cartpole_step, observe_po, out_of_bounds, CartpoleSpec};

/// Maps network outputs to forces: `force = offset + scale · output`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ActionMap {
    pub fn from_scaler(s: &Scaler) -> Self {
        Self {
            offset: s.mean.clone(),
            scale: s.std.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyMode {
    /// Act with the policy mean.
    Greedy,
    /// Sample from the Gaussian policy; requires a log-std parameter.
    Sample,
}

/// Everything recorded during a rollout. The graph tape that produced
/// `means` and `states` is left in place so a loss can be built on it.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    /// Standardized observations per episode, one per step taken.
    pub observations: Vec<Vec<Vec<f64>>>,
    pub means: Vec<Var>,
    pub states: Vec<InternalState>,
    /// Network-space actions taken at each step, `[B × A]`.
    pub actions: Vec<Tensor>,
    pub rewards: Vec<Vec<f64>>,
}

impl RolloutBatch {
    pub fn returns(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn mean_return(&self) -> f64 {
        let r = self.returns();
        r.iter().sum::<f64>() / r.len().max(1) as f64
    }
}

/// Runs one episode per generator in `rngs`. Each generator supplies its
/// episode's initial state, exploration noise and actuation noise.
pub fn rollout_policy(
    model: &mut Model,
    spec: &CartpoleSpec,
    obs_scaler: &Scaler,
    action_map: &ActionMap,
    mut rngs: Vec<ChaCha8Rng>,
    mode: PolicyMode,
) -> Result<RolloutBatch> {
    let batch = rngs.len();
    if batch == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let std: Option<Vec<f64>> = match mode {
        PolicyMode::Greedy => None,
        PolicyMode::Sample => {
            let id = model.log_std.ok_or_else(|| {
                TrainError::Unsupported("sampling requires a policy log-std".into())
            })?;
            Some(
                model
                    .graph
                    .param_value(id)
                    .data()
                    .iter()
                    .map(|v| v.exp())
                    .collect(),
            )
        }
    };
    let obs_dim = obs_scaler.mean.len();
    let act_dim = action_map.scale.len();
    let mut states: Vec<_> = rngs.iter_mut().map(|r| spec.sample_initial(r)).collect();
    let mut alive = vec![true; batch];
    let g = &mut model.graph;
    let mut h = InternalState::zeros(g, model.cell.kind, batch, model.cell.hidden_size);
    let mut out = RolloutBatch {
        observations: vec![Vec::new(); batch],
        means: Vec::new(),
        states: Vec::new(),
        actions: Vec::new(),
        rewards: vec![Vec::new(); batch],
    };
    for _ in 0..spec.horizon {
        if !alive.iter().any(|a| *a) {
            break;
        }
        let mut x = vec![0.0; batch * obs_dim];
        for b in 0..batch {
            if alive[b] {
                let o = obs_scaler.apply(&observe_po(&states[b]));
                x[b * obs_dim..(b + 1) * obs_dim].copy_from_slice(&o);
                out.observations[b].push(o);
            }
        }
        let xv = g.constant(Tensor::matrix(batch, obs_dim, x)?);
        h = cell_step(g, &model.cell, h, xv)?;
        let mean = readout(g, &model.readout, &h)?;
        let mean_vals = g.value(mean).data().to_vec();
        let mut taken = vec![0.0; batch * act_dim];
        for b in 0..batch {
            if !alive[b] {
                continue;
            }
            let row = &mut taken[b * act_dim..(b + 1) * act_dim];
            for (j, a) in row.iter_mut().enumerate() {
                let mu = mean_vals[b * act_dim + j];
                *a = match &std {
                    Some(s) => mu + s[j] * rngs[b].sample::<f64, _>(StandardNormal),
                    None => mu,
                };
            }
            let command = action_map.offset[0] + action_map.scale[0] * row[0];
            let force = spec.applied_force(command, &mut rngs[b]);
            states[b] = cartpole_step(states[b], force, spec);
            out.rewards[b].push(1.0);
            if out_of_bounds(&states[b], spec) {
                alive[b] = false;
            }
        }
        out.means.push(mean);
        out.states.push(h);
        out.actions.push(Tensor::matrix(batch, act_dim, taken)?);
    }
    Ok(out)
}
