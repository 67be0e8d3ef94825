//! Flat `key=value` experiment configs.
//!
//! One assignment per line, `#` starts a comment. `task`, `cell`, `k`,
//! `lambda` and `seed` have no defaults and must always be given.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::CellKind;
use crate::envs::{EnvSpec, EnvTag};
use crate::predictive_state::FeaturizerKind;
use crate::training::Task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key '{key}'")]
    UnknownKey { key: String },
    #[error("missing required key '{key}'")]
    Missing { key: &'static str },
    #[error("invalid value for '{key}': {reason}")]
    Invalid { key: String, reason: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

pub const REQUIRED_KEYS: [&str; 5] = ["task", "cell", "k", "lambda", "seed"];

pub const KNOWN_KEYS: [&str; 24] = [
    "task",
    "env",
    "cell",
    "hidden",
    "k",
    "lambda",
    "phi",
    "seed",
    "epochs",
    "lr",
    "batch_size",
    "val_fraction",
    "n_traj",
    "horizon",
    "obs_noise",
    "eval_episodes",
    "pg_episodes",
    "init_log_std",
    "action_scale",
    "clip_norm",
    "psd",
    "record_wallclock",
    "data",
    "out",
];

/// A fully resolved run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub env: EnvTag,
    pub cell: CellKind,
    pub hidden: usize,
    pub k: usize,
    pub lambda: f64,
    pub phi: FeaturizerKind,
    pub seed: u64,
    /// Epochs for supervised tasks, iterations for policy gradient.
    pub epochs: usize,
    pub lr: f64,
    /// Trajectories per minibatch.
    pub batch_size: usize,
    pub val_fraction: f64,
    /// Dataset size when no dataset file is given.
    pub n_traj: usize,
    pub horizon: Option<usize>,
    pub obs_noise: Option<f64>,
    /// Greedy evaluation episodes per epoch for imitation.
    pub eval_episodes: usize,
    /// Sampled episodes per policy-gradient iteration.
    pub pg_episodes: usize,
    pub init_log_std: f64,
    /// Force per unit of policy output.
    pub action_scale: f64,
    pub clip_norm: f64,
    /// `false` builds the model without any decoder at all.
    pub psd: bool,
    pub record_wallclock: bool,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Config with every optional key at its default.
    pub fn new(task: Task, cell: CellKind, k: usize, lambda: f64, seed: u64) -> Self {
        Self {
            task,
            env: default_env(task),
            cell,
            hidden: 32,
            k,
            lambda,
            phi: FeaturizerKind::Identity,
            seed,
            epochs: 200,
            lr: 1e-3,
            batch_size: 8,
            val_fraction: 0.2,
            n_traj: 50,
            horizon: None,
            obs_noise: None,
            eval_episodes: 10,
            pg_episodes: 16,
            init_log_std: -0.5,
            action_scale: 10.0,
            clip_norm: crate::training::CLIP_NORM,
            psd: true,
            record_wallclock: true,
            data: None,
            out: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut b = ConfigBuilder::default();
        b.merge_text(text)?;
        b.build()
    }

    /// Environment spec with this config's overrides applied.
    pub fn env_spec(&self) -> Result<EnvSpec> {
        let mut spec = EnvSpec::default_for(self.env);
        if let Some(h) = self.horizon {
            spec.set_horizon(h);
        }
        if let Some(noise) = self.obs_noise {
            match &mut spec {
                EnvSpec::Pendulum(p) => p.obs_noise = noise,
                EnvSpec::Lds(l) => l.obs_noise = noise,
                EnvSpec::CartpolePo(_) => {
                    return Err(invalid(
                        "obs_noise",
                        "cartpole-po observations are noiseless",
                    ));
                }
            }
        }
        Ok(spec)
    }

    /// Seed used for a dataset generated on the fly, kept apart from the
    /// model seed's streams.
    pub fn dataset_seed(&self) -> u64 {
        self.seed.wrapping_mul(1_000_003)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.k) {
            return Err(invalid("k", "must be in [1, 10]"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be a finite number >= 0"));
        }
        if self.hidden == 0 {
            return Err(invalid("hidden", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(invalid("val_fraction", "must be in (0, 1)"));
        }
        if self.n_traj < 2 {
            return Err(invalid("n_traj", "must be at least 2"));
        }
        if let Some(h) = self.horizon {
            if h < self.k + 1 {
                return Err(invalid("horizon", "must be at least k + 1"));
            }
        }
        if self.obs_noise.is_some_and(|n| !(n >= 0.0 && n.is_finite())) {
            return Err(invalid("obs_noise", "must be >= 0"));
        }
        if self.pg_episodes == 0 {
            return Err(invalid("pg_episodes", "must be at least 1"));
        }
        if !(self.action_scale > 0.0 && self.action_scale.is_finite()) {
            return Err(invalid("action_scale", "must be positive"));
        }
        if !self.init_log_std.is_finite() {
            return Err(invalid("init_log_std", "must be finite"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(invalid("clip_norm", "must be positive"));
        }
        if self.task == Task::Pg && self.env != EnvTag::CartpolePo {
            return Err(invalid("env", "policy gradient runs on cartpole-po"));
        }
        self.env_spec()?;
        Ok(())
    }

    /// Canonical `key=value` echo of every field.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let pairs: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("env", self.env.to_string()),
            ("cell", self.cell.to_string()),
            ("hidden", self.hidden.to_string()),
            ("k", self.k.to_string()),
            ("lambda", self.lambda.to_string()),
            ("phi", self.phi.to_string()),
            ("seed", self.seed.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("n_traj", self.n_traj.to_string()),
            ("horizon", opt(self.horizon.map(|h| h.to_string()))),
            ("obs_noise", opt(self.obs_noise.map(|n| n.to_string()))),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("pg_episodes", self.pg_episodes.to_string()),
            ("init_log_std", self.init_log_std.to_string()),
            ("action_scale", self.action_scale.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("psd", if self.psd { "on" } else { "off" }.to_string()),
            ("record_wallclock", self.record_wallclock.to_string()),
            (
                "data",
                opt(self.data.as_ref().map(|p| p.display().to_string())),
            ),
            (
                "out",
                opt(self.out.as_ref().map(|p| p.display().to_string())),
            ),
        ];
        pairs
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

fn default_env(task: Task) -> EnvTag {
    match task {
        Task::Filter => EnvTag::Pendulum,
        Task::Imitate | Task::Pg => EnvTag::CartpolePo,
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Raw assignments collected from a file and then from flags; later
/// assignments win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigBuilder {
    values: BTreeMap<String, String>,
}

impl ConfigBuilder {
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
            });
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        for key in REQUIRED_KEYS {
            if !self.values.contains_key(key) {
                return Err(ConfigError::Missing { key });
            }
        }
        let task: Task = parse_field(self, "task")?.expect("required");
        let cell: CellKind = parse_field(self, "cell")?.expect("required");
        let k: usize = parse_field(self, "k")?.expect("required");
        let lambda: f64 = parse_field(self, "lambda")?.expect("required");
        let seed: u64 = parse_field(self, "seed")?.expect("required");
        let mut c = ExperimentConfig::new(task, cell, k, lambda, seed);
        macro_rules! opt {
            ($field:ident) => {
                if let Some(v) = parse_field(self, stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        opt!(env);
        opt!(hidden);
        opt!(phi);
        opt!(epochs);
        opt!(lr);
        opt!(batch_size);
        opt!(val_fraction);
        opt!(n_traj);
        opt!(eval_episodes);
        opt!(pg_episodes);
        opt!(init_log_std);
        opt!(action_scale);
        opt!(clip_norm);
        opt!(record_wallclock);
        c.horizon = parse_field(self, "horizon")?;
        c.obs_noise = parse_field(self, "obs_noise")?;
        if let Some(v) = self.get("psd") {
            c.psd = match v {
                "on" | "true" => true,
                "off" | "false" => false,
                _ => return Err(invalid("psd", "expected on or off")),
            };
        }
        c.data = self
            .get("data")
            .filter(|s| !s.is_empty())
            .map(PathBuf::from);
        c.out = self.get("out").filter(|s| !s.is_empty()).map(PathBuf::from);
        c.validate()?;
        Ok(c)
    }
}

fn parse_field<T>(b: &ConfigBuilder, key: &str) -> Result<Option<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    b.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| invalid(key, format!("'{v}': {e}")))
        })
        .transpose()
}
