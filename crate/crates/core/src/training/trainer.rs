use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde_json::json;

use super::data::Scaler;
use super::losses::{
    filtering_loss, imitation_loss, normalized_advantages, pg_loss, psd_term, reward_to_go,
};
use super::metrics::{MetricRow, RunMetrics, Split};
use super::model::{Model, PsdSettings};
use super::optim::{clip_global_norm, Adam, AdamConfig};
use super::rollout::{rollout_policy, ActionMap, PolicyMode};
use super::{Checkpoint, Result, Task, TrainError};
use crate::autodiff::Var;
use crate::cells::ParamsFile;
use crate::envs::{generate_dataset, CartpoleSpec, Dataset, EnvSpec};
use crate::harness::ExperimentConfig;
use crate::predictive_state::joint_loss;
use crate::rng::{self, Stream};

/// Headline numbers of a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    /// Mean average return over epochs ≥ 1 (validation episodes for
    /// imitation, sampled batches for policy gradient).
    pub mean_return: Option<f64>,
    pub clip_events: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub metrics: RunMetrics,
    pub params: ParamsFile,
    pub metadata: serde_json::Value,
    pub summary: RunSummary,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const PARAMS_FILE: &str = "params.txt";
pub const METADATA_FILE: &str = "metadata.json";
pub const CONFIG_FILE: &str = "config.txt";

impl RunOutcome {
    /// Writes metrics, parameters, metadata and the resolved config echo.
    pub fn write(&self, dir: &Path) -> crate::Result<()> {
        let io = |p: &Path, e| crate::Error::io(p, e);
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let files = [
            (METRICS_FILE, self.metrics.to_csv()),
            (PARAMS_FILE, self.params.to_text()),
            (
                METADATA_FILE,
                serde_json::to_string_pretty(&self.metadata).expect("metadata serializes") + "\n",
            ),
            (CONFIG_FILE, self.config.to_text()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

/// Trains one configuration. Supervised tasks use `dataset`, or generate one
/// from the config when it is `None`; policy gradient interacts with the
/// environment directly.
pub fn train(config: &ExperimentConfig, dataset: Option<&Dataset>) -> Result<RunOutcome> {
    config
        .validate()
        .map_err(|e| TrainError::Unsupported(e.to_string()))?;
    match config.task {
        Task::Filter | Task::Imitate => {
            let generated;
            let ds = match dataset {
                Some(d) => d,
                None => {
                    let spec = config
                        .env_spec()
                        .map_err(|e| TrainError::Unsupported(e.to_string()))?;
                    generated = generate_dataset(
                        &spec,
                        &spec.default_policy(),
                        config.n_traj,
                        config.dataset_seed(),
                        1,
                    )?;
                    &generated
                }
            };
            Supervised::new(config, ds)?.run()
        }
        Task::Pg => {
            let spec = match dataset.map(|d| &d.meta.spec) {
                Some(s) => s.clone(),
                None => config
                    .env_spec()
                    .map_err(|e| TrainError::Unsupported(e.to_string()))?,
            };
            let EnvSpec::CartpolePo(cp) = spec else {
                return Err(TrainError::Unsupported(
                    "policy gradient runs on cartpole-po".into(),
                ));
            };
            train_pg(config, &cp)
        }
    }
}

/// Sums accumulated over minibatches, reduced to per-step means.
#[derive(Default)]
struct Tally {
    task: f64,
    steps: usize,
    psd: f64,
    windows: usize,
}

impl Tally {
    fn row(&self, epoch: usize, split: Split, lambda: f64) -> MetricRow {
        let task = self.task / self.steps.max(1) as f64;
        let psd = self.psd / self.windows.max(1) as f64;
        MetricRow {
            epoch,
            split,
            task_loss: task,
            psd_loss: psd,
            joint_loss: task + lambda * psd,
            avg_return: None,
            wallclock_s: None,
        }
    }
}

fn psd_settings(config: &ExperimentConfig, obs_dim: usize) -> Result<Option<PsdSettings>> {
    Ok(if config.psd {
        Some(PsdSettings::new(
            config.k,
            config.phi,
            config.lambda,
            obs_dim,
        )?)
    } else {
        None
    })
}

fn diverged(epoch: usize, err: TrainError, last_good: &Checkpoint) -> TrainError {
    if err.is_numeric() {
        TrainError::Diverged {
            epoch,
            cause: err.to_string(),
            last_good: Box::new(last_good.clone()),
        }
    } else {
        err
    }
}

fn wrap(epoch: usize, last_good: &Checkpoint) -> impl FnOnce(TrainError) -> TrainError + '_ {
    move |e| diverged(epoch, e, last_good)
}

fn base_metadata(config: &ExperimentConfig, adam: &AdamConfig) -> serde_json::Value {
    json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "optimizer": { "kind": "adam", "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps },
        "clip_norm": config.clip_norm,
        "minibatch_trajectories": config.batch_size,
        "loss_reduction": "sum over time, mean over trajectories; CSV columns are per-step means",
        "psd_mode": if !config.psd { "disabled" } else if config.lambda > 0.0 { "active" } else { "skipped (lambda = 0)" },
    })
}

struct Supervised<'a> {
    config: &'a ExperimentConfig,
    dataset: &'a Dataset,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    obs: Vec<Vec<Vec<f64>>>,
    acts: Vec<Option<Vec<Vec<f64>>>>,
    obs_scaler: Scaler,
    act_scaler: Option<Scaler>,
    model: Model,
}

struct Pass {
    joint: Var,
    task_sum: f64,
    steps: usize,
    psd_sum: f64,
    windows: usize,
}

impl<'a> Supervised<'a> {
    fn new(config: &'a ExperimentConfig, dataset: &'a Dataset) -> Result<Self> {
        let n = dataset.trajectories.len();
        if n < 2 {
            return Err(TrainError::Unsupported(
                "need at least 2 trajectories to split".into(),
            ));
        }
        for (i, t) in dataset.trajectories.iter().enumerate() {
            if t.len() < 2 {
                return Err(TrainError::TooShort {
                    index: i,
                    len: t.len(),
                });
            }
            if config.task == Task::Imitate && t.actions.is_none() {
                return Err(TrainError::MissingActions(i));
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(config.seed, Stream::Split, 0));
        let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1);
        let mut val_idx = perm[..n_val].to_vec();
        let mut train_idx = perm[n_val..].to_vec();
        val_idx.sort_unstable();
        train_idx.sort_unstable();

        let obs_dim = dataset.meta.obs_dim;
        let obs_scaler = Scaler::fit(
            obs_dim,
            train_idx
                .iter()
                .flat_map(|&i| &dataset.trajectories[i].observations),
        );
        let act_scaler = (config.task == Task::Imitate).then(|| {
            Scaler::fit(
                dataset.meta.action_dim,
                train_idx
                    .iter()
                    .flat_map(|&i| dataset.trajectories[i].actions.iter().flatten()),
            )
        });
        let obs = dataset
            .trajectories
            .iter()
            .map(|t| obs_scaler.apply_all(&t.observations))
            .collect();
        let acts = dataset
            .trajectories
            .iter()
            .map(|t| match (&act_scaler, &t.actions) {
                (Some(s), Some(a)) => Some(s.apply_all(a)),
                _ => None,
            })
            .collect();
        let out_dim = match config.task {
            Task::Imitate => dataset.meta.action_dim,
            _ => obs_dim,
        };
        let model = Model::new(
            config.cell,
            obs_dim,
            config.hidden,
            out_dim,
            psd_settings(config, obs_dim)?,
            None,
            config.seed,
        )?;
        Ok(Self {
            config,
            dataset,
            train_idx,
            val_idx,
            obs,
            acts,
            obs_scaler,
            act_scaler,
            model,
        })
    }

    /// Builds the joint loss for the trajectories in `idx` on a fresh tape.
    fn forward(&mut self, idx: &[usize]) -> Result<Pass> {
        let g = &mut self.model.graph;
        g.reset();
        let obs: Vec<&[Vec<f64>]> = idx.iter().map(|&i| self.obs[i].as_slice()).collect();
        let out = match self.config.task {
            Task::Filter => filtering_loss(g, &self.model.cell, &self.model.readout, &obs)?,
            _ => {
                let acts: Vec<Option<&[Vec<f64>]>> =
                    idx.iter().map(|&i| self.acts[i].as_deref()).collect();
                imitation_loss(g, &self.model.cell, &self.model.readout, &obs, &acts)?
            }
        };
        let rows = out.rows as f64;
        let task_sum = g.value(out.loss).item() * rows;
        let mut pass = Pass {
            joint: out.loss,
            task_sum,
            steps: out.active,
            psd_sum: 0.0,
            windows: 0,
        };
        if let (Some(settings), Some(decoder)) = (
            self.model.psd.filter(PsdSettings::active),
            self.model.decoder,
        ) {
            let (r, windows) = psd_term(g, &decoder, &out.states, &obs, &settings)?;
            pass.psd_sum = g.value(r).item() * rows;
            pass.windows = windows;
            pass.joint = joint_loss(g, out.loss, r, settings.lambda)?;
        }
        Ok(pass)
    }

    fn evaluate(&mut self, idx: &[usize]) -> Result<Tally> {
        let mut tally = Tally::default();
        for chunk in idx.chunks(64) {
            let p = self.forward(chunk)?;
            tally.task += p.task_sum;
            tally.steps += p.steps;
            tally.psd += p.psd_sum;
            tally.windows += p.windows;
        }
        self.model.graph.reset();
        Ok(tally)
    }

    fn eval_return(&mut self) -> Result<Option<f64>> {
        let (Task::Imitate, EnvSpec::CartpolePo(spec), Some(act)) =
            (self.config.task, &self.dataset.meta.spec, &self.act_scaler)
        else {
            return Ok(None);
        };
        if self.config.eval_episodes == 0 {
            return Ok(None);
        }
        let rngs = (0..self.config.eval_episodes as u64)
            .map(|i| rng::stream(self.config.seed, Stream::Evaluation, i))
            .collect();
        let batch = rollout_policy(
            &mut self.model,
            spec,
            &self.obs_scaler,
            &ActionMap::from_scaler(act),
            rngs,
            PolicyMode::Greedy,
        )?;
        self.model.graph.reset();
        Ok(Some(batch.mean_return()))
    }

    fn run(mut self) -> Result<RunOutcome> {
        let config = self.config;
        let adam_cfg = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(adam_cfg, &self.model.graph);
        let params = self.model.param_ids();
        let lambda = self.model.psd.map_or(0.0, |s| s.lambda);
        let start = Instant::now();
        let clock = |start: &Instant| {
            config
                .record_wallclock
                .then(|| start.elapsed().as_secs_f64())
        };
        let mut metrics = RunMetrics::default();
        let mut last_good = Checkpoint {
            epoch: 0,
            params: self.model.graph.params_snapshot(),
        };

        let train_idx = self.train_idx.clone();
        let val_idx = self.val_idx.clone();

        let t0 = self.evaluate(&train_idx).map_err(wrap(0, &last_good))?;
        let v0 = self.evaluate(&val_idx).map_err(wrap(0, &last_good))?;
        let r0 = self.eval_return().map_err(wrap(0, &last_good))?;
        metrics.rows.push(MetricRow {
            wallclock_s: clock(&start),
            ..t0.row(0, Split::Train, lambda)
        });
        metrics.rows.push(MetricRow {
            avg_return: r0,
            wallclock_s: clock(&start),
            ..v0.row(0, Split::Val, lambda)
        });

        for epoch in 1..=config.epochs {
            let mut order = train_idx.clone();
            order.shuffle(&mut rng::stream(config.seed, Stream::Shuffle, epoch as u64));
            let mut tally = Tally::default();
            for chunk in order.chunks(config.batch_size) {
                let step = (|| -> Result<()> {
                    let pass = self.forward(chunk)?;
                    let g = &mut self.model.graph;
                    g.zero_grad();
                    g.backward(pass.joint)?;
                    if let Some(norm) = clip_global_norm(g, &params, config.clip_norm) {
                        metrics.clip_events.push((epoch, norm));
                    }
                    adam.step(g)?;
                    tally.task += pass.task_sum;
                    tally.steps += pass.steps;
                    tally.psd += pass.psd_sum;
                    tally.windows += pass.windows;
                    Ok(())
                })();
                step.map_err(wrap(epoch, &last_good))?;
            }
            let v = self.evaluate(&val_idx).map_err(wrap(epoch, &last_good))?;
            let ret = self.eval_return().map_err(wrap(epoch, &last_good))?;
            metrics.rows.push(MetricRow {
                wallclock_s: clock(&start),
                ..tally.row(epoch, Split::Train, lambda)
            });
            metrics.rows.push(MetricRow {
                avg_return: ret,
                wallclock_s: clock(&start),
                ..v.row(epoch, Split::Val, lambda)
            });
            last_good = Checkpoint {
                epoch,
                params: self.model.graph.params_snapshot(),
            };
        }
        if !metrics.clip_events.is_empty() {
            log::info!("gradient clipped on {} steps", metrics.clip_events.len());
        }

        let mut metadata = base_metadata(config, &adam_cfg);
        metadata["validation"] = json!({ "fraction": config.val_fraction, "indices": val_idx });
        metadata["dataset"] = json!({
            "env": self.dataset.meta.env,
            "seed": self.dataset.meta.seed,
            "n_traj": self.dataset.meta.n_traj,
            "policy": self.dataset.meta.policy,
            "spec": self.dataset.meta.spec,
        });
        metadata["observation_scaler"] = json!(self.obs_scaler);
        metadata["action_scaler"] = json!(self.act_scaler);
        metadata["clip_events"] = json!(metrics.clip_events.len());
        Ok(RunOutcome {
            summary: RunSummary {
                final_train_loss: metrics.final_task_loss(Split::Train).unwrap_or(f64::NAN),
                final_val_loss: metrics.final_task_loss(Split::Val),
                mean_return: metrics.mean_return(Split::Val),
                clip_events: metrics.clip_events.len(),
            },
            config: config.clone(),
            params: self.model.params_file(),
            metadata,
            metrics,
        })
    }
}

/// Fixed observation scale for online learning: half the termination
/// bounds.
fn cartpole_obs_scaler(spec: &CartpoleSpec) -> Scaler {
    Scaler {
        mean: vec![0.0, 0.0],
        std: vec![spec.x_limit / 2.0, spec.theta_limit / 2.0],
    }
}

fn train_pg(config: &ExperimentConfig, spec: &CartpoleSpec) -> Result<RunOutcome> {
    let obs_dim = 2;
    let scaler = cartpole_obs_scaler(spec);
    let action_map = ActionMap {
        offset: vec![0.0],
        scale: vec![config.action_scale],
    };
    let mut model = Model::new(
        config.cell,
        obs_dim,
        config.hidden,
        1,
        psd_settings(config, obs_dim)?,
        Some(config.init_log_std),
        config.seed,
    )?;
    let log_std = model.log_std.expect("policy has a log-std");
    let adam_cfg = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, &model.graph);
    let params = model.param_ids();
    let lambda = model.psd.map_or(0.0, |s| s.lambda);
    let start = Instant::now();
    let mut metrics = RunMetrics::default();
    let mut last_good = Checkpoint {
        epoch: 0,
        params: model.graph.params_snapshot(),
    };
    let n = config.pg_episodes;

    for iter in 0..=config.epochs {
        let result = (|| -> Result<MetricRow> {
            model.graph.reset();
            let rngs = (0..n as u64)
                .map(|i| rng::stream(config.seed, Stream::Rollout, iter as u64 * n as u64 + i))
                .collect();
            let batch = rollout_policy(
                &mut model,
                spec,
                &scaler,
                &action_map,
                rngs,
                PolicyMode::Sample,
            )?;
            let rtg: Vec<Vec<f64>> = batch.rewards.iter().map(|r| reward_to_go(r)).collect();
            let adv = normalized_advantages(&rtg);
            let per_step: Vec<Vec<f64>> = (0..batch.means.len())
                .map(|t| {
                    adv.iter()
                        .map(|a| a.get(t).copied().unwrap_or(0.0))
                        .collect()
                })
                .collect();
            let g = &mut model.graph;
            let surrogate = pg_loss(g, &batch.means, log_std.var(), &batch.actions, &per_step, n)?;
            let steps: usize = batch.rewards.iter().map(Vec::len).sum();
            let task = g.value(surrogate).item() * n as f64 / steps.max(1) as f64;
            let mut joint = surrogate;
            let mut psd = 0.0;
            if let (Some(settings), Some(decoder)) =
                (model.psd.filter(PsdSettings::active), model.decoder)
            {
                let obs: Vec<&[Vec<f64>]> = batch.observations.iter().map(Vec::as_slice).collect();
                let (r, windows) = psd_term(g, &decoder, &batch.states, &obs, &settings)?;
                psd = g.value(r).item() * n as f64 / windows.max(1) as f64;
                joint = joint_loss(g, surrogate, r, settings.lambda)?;
            }
            if iter > 0 {
                g.zero_grad();
                g.backward(joint)?;
                if let Some(norm) = clip_global_norm(g, &params, config.clip_norm) {
                    metrics.clip_events.push((iter, norm));
                }
                adam.step(g)?;
            }
            Ok(MetricRow {
                epoch: iter,
                split: Split::Train,
                task_loss: task,
                psd_loss: psd,
                joint_loss: task + lambda * psd,
                avg_return: Some(batch.mean_return()),
                wallclock_s: config
                    .record_wallclock
                    .then(|| start.elapsed().as_secs_f64()),
            })
        })();
        metrics
            .rows
            .push(result.map_err(|e| diverged(iter, e, &last_good))?);
        last_good = Checkpoint {
            epoch: iter,
            params: model.graph.params_snapshot(),
        };
    }
    model.graph.reset();

    let mut metadata = base_metadata(config, &adam_cfg);
    metadata["env_spec"] = json!(EnvSpec::CartpolePo(spec.clone()));
    metadata["observation_scaler"] = json!(scaler);
    metadata["policy"] = json!({
        "kind": "gaussian",
        "action_scale": config.action_scale,
        "init_log_std": config.init_log_std,
        "advantages": "reward-to-go, batch mean subtracted, divided by batch std",
        "episodes_per_iteration": n,
    });
    metadata["clip_events"] = json!(metrics.clip_events.len());
    Ok(RunOutcome {
        summary: RunSummary {
            final_train_loss: metrics.final_task_loss(Split::Train).unwrap_or(f64::NAN),
            final_val_loss: None,
            mean_return: metrics.mean_return(Split::Train),
            clip_events: metrics.clip_events.len(),
        },
        config: config.clone(),
        params: model.params_file(),
        metadata,
        metrics,
    })
}
