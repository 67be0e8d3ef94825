//! Seeded simulators and dataset generation.
//!
//! Trajectories only ever store the *observed* view of an environment; the
//! latent state used to simulate it is discarded.

pub mod cartpole;
pub mod dataset;
pub mod lds;
pub mod lqr;
pub mod pendulum;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cartpole::{
    cartpole_step, observe_po, out_of_bounds, CartpoleSpec, CartpoleState, LqrExpert,
};
pub use dataset::{Dataset, DatasetMeta};
pub use lds::{lds_observe, lds_step, LdsSpec};
pub use pendulum::{pendulum_step, PendulumSpec, PendulumState};

use crate::parallel;
use crate::rng::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("transition matrix spectral radius {0} exceeds the stability guard")]
    Unstable(f64),
    #[error("riccati iteration failed: {0}")]
    Riccati(&'static str),
    #[error("policy {policy} is not available for env {env}")]
    UnsupportedPolicy { env: EnvTag, policy: String },
    #[error("unknown env '{0}'")]
    UnknownEnv(String),
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, EnvError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvTag {
    Pendulum,
    Lds,
    CartpolePo,
}

impl fmt::Display for EnvTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvTag::Pendulum => "pendulum",
            EnvTag::Lds => "lds",
            EnvTag::CartpolePo => "cartpole-po",
        })
    }
}

impl FromStr for EnvTag {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvTag::Pendulum),
            "lds" => Ok(EnvTag::Lds),
            "cartpole-po" | "cartpole" => Ok(EnvTag::CartpolePo),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "kebab-case")]
pub enum EnvSpec {
    Pendulum(PendulumSpec),
    Lds(LdsSpec),
    CartpolePo(CartpoleSpec),
}

impl EnvSpec {
    pub fn default_for(tag: EnvTag) -> Self {
        match tag {
            EnvTag::Pendulum => EnvSpec::Pendulum(PendulumSpec::default()),
            EnvTag::Lds => EnvSpec::Lds(LdsSpec::default()),
            EnvTag::CartpolePo => EnvSpec::CartpolePo(CartpoleSpec::default()),
        }
    }

    pub fn tag(&self) -> EnvTag {
        match self {
            EnvSpec::Pendulum(_) => EnvTag::Pendulum,
            EnvSpec::Lds(_) => EnvTag::Lds,
            EnvSpec::CartpolePo(_) => EnvTag::CartpolePo,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvSpec::Pendulum(_) => 1,
            EnvSpec::Lds(s) => s.state_dim(),
            EnvSpec::CartpolePo(_) => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            EnvSpec::Pendulum(_) | EnvSpec::CartpolePo(_) => 1,
            EnvSpec::Lds(s) => s.input_dim(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::Pendulum(s) => s.horizon,
            EnvSpec::Lds(s) => s.horizon,
            EnvSpec::CartpolePo(s) => s.horizon,
        }
    }

    pub fn set_horizon(&mut self, horizon: usize) {
        match self {
            EnvSpec::Pendulum(s) => s.horizon = horizon,
            EnvSpec::Lds(s) => s.horizon = horizon,
            EnvSpec::CartpolePo(s) => s.horizon = horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dt = match self {
            EnvSpec::Pendulum(s) => s.dt,
            EnvSpec::Lds(_) => 1.0,
            EnvSpec::CartpolePo(s) => s.dt,
        };
        if dt.is_nan() || dt <= 0.0 {
            return Err(EnvError::Config("dt must be positive".into()));
        }
        if self.horizon() < 2 {
            return Err(EnvError::Config("horizon must be at least 2".into()));
        }
        if let EnvSpec::Lds(s) = self {
            s.validate()?;
        }
        Ok(())
    }

    pub fn default_policy(&self) -> DataPolicy {
        match self {
            EnvSpec::Pendulum(_) => DataPolicy::Sinusoid {
                amplitude: 0.5,
                frequency: 0.3,
            },
            EnvSpec::Lds(_) => DataPolicy::Lqr { exploration: 1.0 },
            EnvSpec::CartpolePo(_) => DataPolicy::Expert,
        }
    }
}

/// Preset controllers used to collect datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum DataPolicy {
    Zero,
    /// `u_t = amplitude · sin(frequency · t)` on every input channel.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
    },
    /// LQR state feedback on the latent state plus Gaussian exploration.
    Lqr {
        exploration: f64,
    },
    /// Full-state LQR expert on the cart-pole.
    Expert,
}

impl fmt::Display for DataPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataPolicy::Zero => "zero",
            DataPolicy::Sinusoid { .. } => "sinusoid",
            DataPolicy::Lqr { .. } => "lqr",
            DataPolicy::Expert => "expert",
        })
    }
}

/// One rollout as seen by the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub env: EnvTag,
    pub seed: u64,
    pub observations: Vec<Vec<f64>>,
    pub actions: Option<Vec<Vec<f64>>>,
    pub rewards: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.as_ref().map_or(0.0, |r| r.iter().sum())
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl CartpoleSpec {
    pub fn sample_initial(&self, rng: &mut impl Rng) -> CartpoleState {
        let mut s = [0.0; 4];
        for (v, r) in s.iter_mut().zip(self.init_range) {
            *v = if r > 0.0 {
                rng.random_range(-r..r)
            } else {
                0.0
            };
        }
        s
    }

    /// Force actually applied: clamped command plus actuation noise.
    pub fn applied_force(&self, command: f64, rng: &mut impl Rng) -> f64 {
        let noise = if self.force_noise > 0.0 {
            self.force_noise * gaussian(rng)
        } else {
            0.0
        };
        command.clamp(-self.force_max, self.force_max) + noise
    }
}

/// Simulates one trajectory from its own random stream.
pub fn rollout(spec: &EnvSpec, policy: &DataPolicy, seed: u64) -> Result<Trajectory> {
    let mut rng = rng::stream(seed, Stream::Trajectory, 0);
    let unsupported = || EnvError::UnsupportedPolicy {
        env: spec.tag(),
        policy: policy.to_string(),
    };
    let mut obs = Vec::new();
    let mut acts = Vec::new();
    let mut rewards = Vec::new();
    match spec {
        EnvSpec::Pendulum(p) => {
            let mut s: PendulumState = [
                rng.random_range(-p.init_angle..=p.init_angle),
                rng.random_range(-p.init_velocity..=p.init_velocity),
            ];
            for t in 0..p.horizon {
                let noise = if p.obs_noise > 0.0 {
                    p.obs_noise * gaussian(&mut rng)
                } else {
                    0.0
                };
                obs.push(vec![s[0] + noise]);
                let u = match policy {
                    DataPolicy::Zero => 0.0,
                    DataPolicy::Sinusoid {
                        amplitude,
                        frequency,
                    } => amplitude * (frequency * t as f64).sin(),
                    _ => return Err(unsupported()),
                };
                acts.push(vec![u]);
                rewards.push(-s[0] * s[0]);
                s = pendulum_step(s, u, p);
            }
        }
        EnvSpec::Lds(l) => {
            l.validate()?;
            let gain = match policy {
                DataPolicy::Lqr { .. } => Some(l.lqr_gain()?),
                DataPolicy::Zero | DataPolicy::Sinusoid { .. } => None,
                DataPolicy::Expert => return Err(unsupported()),
            };
            let m = l.input_dim();
            let mut s: Vec<f64> = (0..l.state_dim())
                .map(|_| l.init_std * gaussian(&mut rng))
                .collect();
            for t in 0..l.horizon {
                obs.push(lds_observe(&s, l, &mut rng));
                let u: Vec<f64> = match policy {
                    DataPolicy::Zero => vec![0.0; m],
                    DataPolicy::Sinusoid {
                        amplitude,
                        frequency,
                    } => {
                        vec![amplitude * (frequency * t as f64).sin(); m]
                    }
                    DataPolicy::Lqr { exploration } => {
                        let k = gain.as_ref().expect("gain computed above");
                        (0..m)
                            .map(|i| {
                                let fb: f64 = (0..s.len()).map(|j| k[(i, j)] * s[j]).sum();
                                -fb + exploration * gaussian(&mut rng)
                            })
                            .collect()
                    }
                    DataPolicy::Expert => unreachable!(),
                };
                rewards.push(-s.iter().map(|v| v * v).sum::<f64>());
                s = lds_step(&s, &u, l, &mut rng);
                acts.push(u);
            }
        }
        EnvSpec::CartpolePo(c) => {
            let expert = match policy {
                DataPolicy::Expert => Some(LqrExpert::new(c)?),
                DataPolicy::Zero => None,
                _ => return Err(unsupported()),
            };
            let mut s = c.sample_initial(&mut rng);
            for _ in 0..c.horizon {
                obs.push(observe_po(&s).to_vec());
                let command = expert
                    .as_ref()
                    .map_or(0.0, |e| e.act(&s))
                    .clamp(-c.force_max, c.force_max);
                acts.push(vec![command]);
                rewards.push(1.0);
                let force = c.applied_force(command, &mut rng);
                s = cartpole_step(s, force, c);
                if out_of_bounds(&s, c) {
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        env: spec.tag(),
        seed,
        observations: obs,
        actions: Some(acts),
        rewards: Some(rewards),
    })
}

/// `n_traj` rollouts; trajectory `i` uses seed `seed + i`.
pub fn generate_dataset(
    spec: &EnvSpec,
    policy: &DataPolicy,
    n_traj: usize,
    seed: u64,
    threads: usize,
) -> Result<Dataset> {
    if n_traj == 0 {
        return Err(EnvError::Config("n_traj must be at least 1".into()));
    }
    spec.validate()?;
    let seeds: Vec<u64> = (0..n_traj as u64).map(|i| seed + i).collect();
    let trajectories = parallel::map(seeds, threads, |s| rollout(spec, policy, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta: DatasetMeta {
            env: spec.tag(),
            obs_dim: spec.obs_dim(),
            action_dim: spec.action_dim(),
            horizon: spec.horizon(),
            n_traj,
            seed,
            has_rewards: true,
            policy: policy.clone(),
            spec: spec.clone(),
        },
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_dataset_shape() {
        let spec = EnvSpec::default_for(EnvTag::Pendulum);
        let ds = generate_dataset(&spec, &spec.default_policy(), 10, 3, 1).unwrap();
        assert_eq!(ds.trajectories.len(), 10);
        for (i, t) in ds.trajectories.iter().enumerate() {
            assert_eq!(t.len(), 100);
            assert_eq!(t.seed, 3 + i as u64);
            assert!(t
                .observations
                .iter()
                .all(|o| o.len() == 1 && o[0].is_finite()));
        }
    }

    #[test]
    fn pendulum_excitation_follows_sinusoid() {
        let spec = EnvSpec::default_for(EnvTag::Pendulum);
        let t = rollout(&spec, &spec.default_policy(), 0).unwrap();
        let acts = t.actions.unwrap();
        for (i, a) in acts.iter().enumerate() {
            assert_eq!(a[0], 0.5 * (0.3 * i as f64).sin());
        }
    }

    #[test]
    fn generation_is_deterministic_and_thread_independent() {
        for tag in [EnvTag::Pendulum, EnvTag::Lds, EnvTag::CartpolePo] {
            let spec = EnvSpec::default_for(tag);
            let a = generate_dataset(&spec, &spec.default_policy(), 6, 11, 1).unwrap();
            let b = generate_dataset(&spec, &spec.default_policy(), 6, 11, 3).unwrap();
            assert_eq!(a, b, "{tag}");
        }
    }

    #[test]
    fn cartpole_observations_exclude_velocities() {
        let spec = EnvSpec::default_for(EnvTag::CartpolePo);
        let t = rollout(&spec, &DataPolicy::Expert, 4).unwrap();
        assert!(t.observations.iter().all(|o| o.len() == 2));
    }

    #[test]
    fn expert_keeps_the_pole_up() {
        let spec = EnvSpec::default_for(EnvTag::CartpolePo);
        let ds = generate_dataset(&spec, &DataPolicy::Expert, 100, 1000, 1).unwrap();
        let mean_len = ds.trajectories.iter().map(|t| t.len() as f64).sum::<f64>() / 100.0;
        assert!(mean_len >= 195.0, "mean episode length {mean_len}");
    }

    #[test]
    fn unsupported_policy_is_rejected() {
        let spec = EnvSpec::default_for(EnvTag::Pendulum);
        assert!(matches!(
            rollout(&spec, &DataPolicy::Expert, 0),
            Err(EnvError::UnsupportedPolicy { .. })
        ));
    }

    #[test]
    fn unstable_lds_is_a_config_error() {
        let mut l = LdsSpec::default();
        l.a[0][0] = 3.0;
        let spec = EnvSpec::Lds(l);
        assert!(matches!(
            generate_dataset(&spec, &DataPolicy::Zero, 2, 0, 1),
            Err(EnvError::Unstable(_))
        ));
    }
}
