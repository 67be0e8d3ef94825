//! Grid sweeps over `(cell, k, λ, φ)` with paired seeds.

use std::path::Path;

use super::config::ExperimentConfig;
use super::report::{summarize, GroupKey, Report, ReportError, RunEntry};
use crate::cells::CellKind;
use crate::envs::{generate_dataset, Dataset};
use crate::parallel;
use crate::predictive_state::FeaturizerKind;
use crate::training::{train, RunOutcome, Task};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub base: ExperimentConfig,
    pub cells: Vec<CellKind>,
    pub ks: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub phis: Vec<FeaturizerKind>,
    pub seeds: Vec<u64>,
    pub parallelism: usize,
}

impl SweepPlan {
    /// Plan over the base config's own cell, k and φ.
    pub fn new(base: ExperimentConfig, lambdas: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            cells: vec![base.cell],
            ks: vec![base.k],
            phis: vec![base.phi],
            base,
            lambdas,
            seeds,
            parallelism: 1,
        }
    }

    /// Every run of the cross product. One λ = 0 baseline per (cell, seed)
    /// is always included; since the decoder is skipped at λ = 0 it does
    /// not depend on `k` or `φ`.
    pub fn runs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &cell in &self.cells {
            for &seed in &self.seeds {
                let mut c = self.base.clone();
                c.cell = cell;
                c.seed = seed;
                c.lambda = 0.0;
                c.k = self.ks.first().copied().unwrap_or(self.base.k);
                c.phi = FeaturizerKind::Identity;
                out.push(c);
            }
            for &k in &self.ks {
                for &phi in &self.phis {
                    for &lambda in self.lambdas.iter().filter(|l| **l != 0.0) {
                        for &seed in &self.seeds {
                            let mut c = self.base.clone();
                            c.cell = cell;
                            c.k = k;
                            c.phi = phi;
                            c.lambda = lambda;
                            c.seed = seed;
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Directory name for one run inside a sweep.
pub fn run_dir_name(c: &ExperimentConfig) -> String {
    let key = GroupKey::of(c);
    match key.k {
        None => format!("{}-baseline-s{}", c.cell, c.seed),
        Some(k) => format!("{}-k{}-lambda{}-{}-s{}", c.cell, k, c.lambda, c.phi, c.seed),
    }
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub config: ExperimentConfig,
    pub result: Result<RunOutcome, String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub report: Report,
}

impl SweepOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRun> {
        self.runs.iter().filter(|r| r.result.is_err())
    }
}

/// Datasets for supervised tasks, one per seed so paired runs share data.
fn datasets(plan: &SweepPlan) -> crate::Result<Vec<(u64, Dataset)>> {
    if plan.base.task == Task::Pg {
        return Ok(Vec::new());
    }
    if let Some(path) = &plan.base.data {
        let ds = Dataset::read(path)?;
        return Ok(plan.seeds.iter().map(|&s| (s, ds.clone())).collect());
    }
    let spec = plan.base.env_spec()?;
    let items: Vec<u64> = plan.seeds.clone();
    parallel::map(items, plan.parallelism, |seed| {
        let mut c = plan.base.clone();
        c.seed = seed;
        generate_dataset(&spec, &spec.default_policy(), c.n_traj, c.dataset_seed(), 1)
            .map(|d| (seed, d))
    })
    .into_iter()
    .map(|r| r.map_err(crate::Error::from))
    .collect()
}

/// Runs the sweep. Failed treatment runs are logged and left out of the
/// comparison; a failed baseline aborts the sweep. When `out` is given each
/// run writes its own directory and the summaries land at the top level.
pub fn run_sweep(plan: &SweepPlan, out: Option<&Path>) -> crate::Result<SweepOutcome> {
    if plan.seeds.is_empty() {
        return Err(ReportError::NoRuns.into());
    }
    let data = datasets(plan)?;
    let configs = plan.runs();
    let runs: Vec<SweepRun> = parallel::map(configs, plan.parallelism, |mut config| {
        if let Some(dir) = out {
            config.out = Some(dir.join(run_dir_name(&config)));
        }
        let ds = data.iter().find(|(s, _)| *s == config.seed).map(|(_, d)| d);
        let result = train(&config, ds).map_err(|e| e.to_string()).and_then(|o| {
            if let Some(dir) = &config.out {
                o.write(dir).map_err(|e| e.to_string())?;
            }
            Ok(o)
        });
        SweepRun { config, result }
    });

    let mut entries = Vec::new();
    for run in &runs {
        match &run.result {
            Ok(o) => entries.push(RunEntry {
                config: run.config.clone(),
                metrics: o.metrics.clone(),
            }),
            Err(msg) if GroupKey::of(&run.config).is_baseline() => {
                return Err(ReportError::BaselineFailed {
                    config: run_dir_name(&run.config),
                    msg: msg.clone(),
                }
                .into());
            }
            Err(msg) => log::warn!(
                "run {} failed and is excluded: {msg}",
                run_dir_name(&run.config)
            ),
        }
    }
    let report = summarize(&entries, true)?;
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(SweepOutcome { runs, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_injected_once_per_seed() {
        let base = ExperimentConfig::new(Task::Filter, CellKind::Gru, 4, 0.5, 1);
        let plan = SweepPlan::new(base, vec![0.0, 0.5], vec![1, 2, 3]);
        let runs = plan.runs();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs.iter().filter(|c| c.lambda == 0.0).count(), 3);

        let mut plan = plan;
        plan.lambdas = vec![0.5];
        plan.ks = vec![2, 4];
        assert_eq!(plan.runs().len(), 3 + 6);
    }
}
