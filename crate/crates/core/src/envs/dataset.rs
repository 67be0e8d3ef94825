//! Plain-text dataset files.
//!
//! ```text
//! PSDLAB-TRAJ-v1
//! {"env":"pendulum","obs_dim":1,...}
//! traj 0 100 7
//! 0,<obs..>,<act..>,<reward>
//! ...
//! end
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataPolicy, EnvError, EnvSpec, EnvTag, Result, Trajectory};
use crate::format::fmt_f64;

pub const DATASET_MAGIC: &str = "PSDLAB-TRAJ-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub env: EnvTag,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub has_rewards: bool,
    pub policy: DataPolicy,
    pub spec: EnvSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> EnvError {
    EnvError::Parse {
        line,
        msg: msg.into(),
    }
}

impl Dataset {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(DATASET_MAGIC);
        out.push('\n');
        out.push_str(&serde_json::to_string(&self.meta).expect("metadata serializes"));
        out.push('\n');
        for (i, traj) in self.trajectories.iter().enumerate() {
            out.push_str(&format!("traj {i} {} {}\n", traj.len(), traj.seed));
            for t in 0..traj.len() {
                let mut fields = vec![t.to_string()];
                fields.extend(traj.observations[t].iter().map(|&v| fmt_f64(v)));
                if let Some(acts) = &traj.actions {
                    fields.extend(acts[t].iter().map(|&v| fmt_f64(v)));
                }
                if let Some(r) = &traj.rewards {
                    fields.push(fmt_f64(r[t]));
                }
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, DATASET_MAGIC)) => {}
            _ => return Err(parse_err(1, format!("expected header {DATASET_MAGIC}"))),
        }
        let (n, meta_line) = lines
            .next()
            .ok_or_else(|| parse_err(2, "missing metadata"))?;
        let meta: DatasetMeta =
            serde_json::from_str(meta_line).map_err(|e| parse_err(n, e.to_string()))?;
        let has_actions = meta.action_dim > 0;
        let width = 1 + meta.obs_dim + meta.action_dim + usize::from(meta.has_rewards);
        let mut trajectories = Vec::with_capacity(meta.n_traj);
        loop {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, "missing end marker"))?;
            if line == "end" {
                break;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            let [tag, idx, len, seed] = parts[..] else {
                return Err(parse_err(n, "expected 'traj <index> <len> <seed>'"));
            };
            if tag != "traj" || idx.parse::<usize>().ok() != Some(trajectories.len()) {
                return Err(parse_err(n, "bad trajectory header"));
            }
            let len: usize = len.parse().map_err(|_| parse_err(n, "bad length"))?;
            let seed: u64 = seed.parse().map_err(|_| parse_err(n, "bad seed"))?;
            if len < 2 {
                return Err(parse_err(n, "trajectory shorter than 2 steps"));
            }
            let mut traj = Trajectory {
                env: meta.env,
                seed,
                observations: Vec::with_capacity(len),
                actions: has_actions.then(Vec::new),
                rewards: meta.has_rewards.then(Vec::new),
            };
            for t in 0..len {
                let (n, row) = lines
                    .next()
                    .ok_or_else(|| parse_err(0, "truncated trajectory"))?;
                let fields: Vec<&str> = row.split(',').collect();
                if fields.len() != width {
                    return Err(parse_err(
                        n,
                        format!("expected {width} fields, found {}", fields.len()),
                    ));
                }
                if fields[0].parse::<usize>().ok() != Some(t) {
                    return Err(parse_err(n, "time index out of order"));
                }
                let vals = fields[1..]
                    .iter()
                    .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| parse_err(n, "non-numeric or non-finite value"))?;
                let (obs, rest) = vals.split_at(meta.obs_dim);
                let (act, rew) = rest.split_at(meta.action_dim);
                traj.observations.push(obs.to_vec());
                if let Some(a) = traj.actions.as_mut() {
                    a.push(act.to_vec());
                }
                if let Some(r) = traj.rewards.as_mut() {
                    r.push(rew[0]);
                }
            }
            trajectories.push(traj);
        }
        if trajectories.len() != meta.n_traj {
            return Err(parse_err(
                0,
                format!(
                    "expected {} trajectories, found {}",
                    meta.n_traj,
                    trajectories.len()
                ),
            ));
        }
        Ok(Self { meta, trajectories })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn read(path: &Path) -> std::result::Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Self::parse(&text)?)
    }
}
