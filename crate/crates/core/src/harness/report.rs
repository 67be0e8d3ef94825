//! Seed-paired summaries over finished runs.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::ExperimentConfig;
use super::stats::{
    fmt_mean_std, fmt_sig, mean, median, sample_std, significance_marker, sorted,
    wilcoxon_signed_rank, StatsError,
};
use crate::cells::CellKind;
use crate::envs::EnvTag;
use crate::format::{fmt_f64, fmt_opt};
use crate::predictive_state::FeaturizerKind;
use crate::training::{RunMetrics, Split, Task};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("missing {path}")]
    MissingFile { path: PathBuf },
    #[error("{path}: {msg}")]
    BadFile { path: PathBuf, msg: String },
    #[error("no completed runs to report")]
    NoRuns,
    #[error("runs mix different tasks or environments")]
    Mixed,
    #[error("{config}: seeds {found:?} do not match the baseline's {expected:?}")]
    MismatchedSeeds {
        config: String,
        expected: Vec<u64>,
        found: Vec<u64>,
    },
    #[error("{config}: no baseline runs for comparison")]
    NoBaseline { config: String },
    #[error("baseline run {config} failed: {msg}")]
    BaselineFailed { config: String, msg: String },
    #[error("duplicate run for {config} seed {seed}")]
    Duplicate { config: String, seed: u64 },
}

/// Whether a larger metric is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Lower,
    Higher,
}

impl Direction {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Filter => Direction::Lower,
            Task::Imitate | Task::Pg => Direction::Higher,
        }
    }

    /// Signed improvement of `treated` over `baseline`.
    pub fn gain(self, treated: f64, baseline: f64) -> f64 {
        match self {
            Direction::Higher => treated - baseline,
            Direction::Lower => baseline - treated,
        }
    }
}

/// The per-run number compared across seeds: final validation loss for
/// filtering, the run's mean average return otherwise.
pub fn run_metric(task: Task, metrics: &RunMetrics) -> Option<f64> {
    match task {
        Task::Filter => metrics.final_task_loss(Split::Val),
        Task::Imitate => metrics.mean_return(Split::Val),
        Task::Pg => metrics.mean_return(Split::Train),
    }
}

#[derive(Clone, Debug)]
pub struct RunEntry {
    pub config: ExperimentConfig,
    pub metrics: RunMetrics,
}

pub fn load_run(dir: &Path) -> Result<RunEntry, ReportError> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|_| ReportError::MissingFile { path })
    };
    let bad = |name: &str, msg: String| ReportError::BadFile {
        path: dir.join(name),
        msg,
    };
    let config = ExperimentConfig::parse(&read("config.txt")?)
        .map_err(|e| bad("config.txt", e.to_string()))?;
    let metrics =
        RunMetrics::parse_csv(&read("metrics.csv")?).map_err(|e| bad("metrics.csv", e))?;
    Ok(RunEntry { config, metrics })
}

/// A configuration up to the seed. Baselines (λ = 0 or no decoder) ignore
/// `k` and `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupKey {
    pub cell: CellKind,
    pub k: Option<usize>,
    pub phi: Option<FeaturizerKind>,
    pub lambda: f64,
}

impl GroupKey {
    pub fn of(c: &ExperimentConfig) -> Self {
        if c.lambda == 0.0 || !c.psd {
            Self {
                cell: c.cell,
                k: None,
                phi: None,
                lambda: 0.0,
            }
        } else {
            Self {
                cell: c.cell,
                k: Some(c.k),
                phi: Some(c.phi),
                lambda: c.lambda,
            }
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.k.is_none()
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        let cell = |c: CellKind| CellKind::ALL.iter().position(|x| *x == c);
        cell(self.cell)
            .cmp(&cell(other.cell))
            .then(other.is_baseline().cmp(&self.is_baseline()))
            .then(self.k.cmp(&other.k))
            .then(
                self.phi
                    .map(|p| p.to_string())
                    .cmp(&other.phi.map(|p| p.to_string())),
            )
            .then(other.lambda.total_cmp(&self.lambda))
    }

    fn k_str(&self) -> String {
        self.k.map_or("-".into(), |k| k.to_string())
    }

    fn phi_str(&self) -> String {
        self.phi.map_or("-".into(), |p| p.to_string())
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.k {
            None => write!(f, "{} baseline", self.cell),
            Some(k) => write!(
                f,
                "{} k={} lambda={} phi={}",
                self.cell,
                k,
                self.lambda,
                self.phi_str()
            ),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupStats {
    pub key: GroupKey,
    /// Sorted seeds with the matching metric values.
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
}

impl GroupStats {
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn std(&self) -> f64 {
        sample_std(&self.values)
    }

    pub fn single_run(&self) -> bool {
        self.values.len() == 1
    }

    fn value_for(&self, seed: u64) -> Option<f64> {
        self.seeds
            .iter()
            .position(|s| *s == seed)
            .map(|i| self.values[i])
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub key: GroupKey,
    pub pairs: usize,
    pub baseline_mean: f64,
    pub treated_mean: f64,
    /// Relative improvement of the means, oriented so positive is better.
    pub rel_delta: Option<f64>,
    /// Improved pairs out of `pairs`.
    pub wins: usize,
    pub p_value: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub task: Task,
    pub env: EnvTag,
    pub direction: Direction,
    pub groups: Vec<GroupStats>,
    pub comparisons: Vec<Comparison>,
}

/// Groups runs by configuration and compares each treatment with the
/// baseline of the same cell on paired seeds. With `allow_partial`, only the
/// seeds both sides completed are compared; otherwise mismatched seed sets
/// are an error.
pub fn summarize(entries: &[RunEntry], allow_partial: bool) -> Result<Report, ReportError> {
    let first = entries.first().ok_or(ReportError::NoRuns)?;
    let (task, env) = (first.config.task, first.config.env);
    if entries
        .iter()
        .any(|e| e.config.task != task || e.config.env != env)
    {
        return Err(ReportError::Mixed);
    }
    let direction = Direction::for_task(task);
    let mut groups: Vec<GroupStats> = Vec::new();
    for e in entries {
        let key = GroupKey::of(&e.config);
        let value = run_metric(task, &e.metrics).ok_or_else(|| ReportError::BadFile {
            path: PathBuf::from(format!("{key} seed {}", e.config.seed)),
            msg: "metrics carry no comparable value".into(),
        })?;
        let group = match groups.iter_mut().position(|g| g.key == key) {
            Some(i) => &mut groups[i],
            None => {
                groups.push(GroupStats {
                    key: key.clone(),
                    seeds: Vec::new(),
                    values: Vec::new(),
                });
                groups.last_mut().expect("just pushed")
            }
        };
        if group.seeds.contains(&e.config.seed) {
            return Err(ReportError::Duplicate {
                config: key.to_string(),
                seed: e.config.seed,
            });
        }
        group.seeds.push(e.config.seed);
        group.values.push(value);
    }
    for g in &mut groups {
        let mut pairs: Vec<(u64, f64)> = g
            .seeds
            .iter()
            .copied()
            .zip(g.values.iter().copied())
            .collect();
        pairs.sort_by_key(|p| p.0);
        (g.seeds, g.values) = pairs.into_iter().unzip();
    }
    groups.sort_by(|a, b| a.key.cmp_key(&b.key));

    let mut comparisons = Vec::new();
    for g in groups.iter().filter(|g| !g.key.is_baseline()) {
        let Some(base) = groups
            .iter()
            .find(|b| b.key.is_baseline() && b.key.cell == g.key.cell)
        else {
            return Err(ReportError::NoBaseline {
                config: g.key.to_string(),
            });
        };
        if !allow_partial && base.seeds != g.seeds {
            return Err(ReportError::MismatchedSeeds {
                config: g.key.to_string(),
                expected: base.seeds.clone(),
                found: g.seeds.clone(),
            });
        }
        let common: Vec<(f64, f64)> = g
            .seeds
            .iter()
            .filter_map(|&s| Some((g.value_for(s)?, base.value_for(s)?)))
            .collect();
        let treated: Vec<f64> = common.iter().map(|c| c.0).collect();
        let baseline: Vec<f64> = common.iter().map(|c| c.1).collect();
        let diffs: Vec<f64> = common.iter().map(|&(t, b)| direction.gain(t, b)).collect();
        let (tm, bm) = (mean(&treated), mean(&baseline));
        let rel_delta = if bm != 0.0 {
            Some(direction.gain(tm, bm) / bm.abs())
        } else if tm == bm {
            Some(0.0)
        } else {
            None
        };
        let (p_value, note) = if diffs.iter().all(|d| *d == 0.0) {
            (Some(1.0), "no difference".to_string())
        } else {
            match wilcoxon_signed_rank(&diffs) {
                Ok(w) => (
                    Some(w.p_value),
                    if w.exact { "exact" } else { "normal approx." }.to_string(),
                ),
                Err(e @ StatsError::InsufficientPairs(_)) => (None, e.to_string()),
                Err(e) => (None, e.to_string()),
            }
        };
        comparisons.push(Comparison {
            key: g.key.clone(),
            pairs: common.len(),
            baseline_mean: bm,
            treated_mean: tm,
            rel_delta,
            wins: diffs.iter().filter(|d| **d > 0.0).count(),
            p_value,
            note,
        });
    }
    Ok(Report {
        task,
        env,
        direction,
        groups,
        comparisons,
    })
}

/// Loads every run directory and summarizes them strictly.
pub fn report(dirs: &[PathBuf]) -> Result<Report, ReportError> {
    let mut sorted_dirs = dirs.to_vec();
    sorted_dirs.sort();
    let entries = sorted_dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(&entries, false)
}

impl Report {
    fn comparison(&self, key: &GroupKey) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| &c.key == key)
    }

    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("task,env,cell,phi,k,lambda,runs,mean,std,median,single_run,rel_delta,wins,pairs,p_value,significance\n");
        for g in &self.groups {
            let c = self.comparison(&g.key);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.task,
                self.env,
                g.key.cell,
                g.key.phi_str(),
                g.key.k_str(),
                g.key.lambda,
                g.values.len(),
                fmt_f64(g.mean()),
                fmt_f64(g.std()),
                fmt_f64(median(&g.values)),
                g.single_run(),
                fmt_opt(c.and_then(|c| c.rel_delta)),
                c.map_or(String::new(), |c| c.wins.to_string()),
                c.map_or(String::new(), |c| c.pairs.to_string()),
                fmt_opt(c.and_then(|c| c.p_value)),
                significance_marker(c.and_then(|c| c.p_value)),
            ));
        }
        out
    }

    /// Sorted per-seed metrics for every configuration.
    pub fn percentiles_csv(&self) -> String {
        let mut out = String::from("cell,phi,k,lambda,rank,percentile,value\n");
        for g in &self.groups {
            let s = sorted(&g.values);
            let n = s.len();
            for (i, v) in s.iter().enumerate() {
                let pct = if n > 1 {
                    100.0 * i as f64 / (n - 1) as f64
                } else {
                    50.0
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    g.key.cell,
                    g.key.phi_str(),
                    g.key.k_str(),
                    g.key.lambda,
                    i,
                    fmt_f64(pct),
                    fmt_f64(*v)
                ));
            }
        }
        out
    }

    /// Plain-text table: one line per configuration, mean ± std and the
    /// paired comparison against its baseline.
    pub fn table(&self) -> String {
        let metric = match self.task {
            Task::Filter => "final validation loss (lower is better)",
            _ => "mean average return (higher is better)",
        };
        let mut lines = vec![
            format!("{} on {}: {}", self.task, self.env, metric),
            format!(
                "{:<40} {:>22} {:>9} {:>6} {:>10}",
                "configuration", "mean ± std", "rel. Δ", "wins", "p"
            ),
        ];
        for g in &self.groups {
            let c = self.comparison(&g.key);
            let mut ms = fmt_mean_std(&g.values);
            if g.single_run() {
                ms.push_str(" (1 run)");
            }
            let delta = c
                .and_then(|c| c.rel_delta)
                .map_or(String::new(), |d| format!("{:+.1}%", 100.0 * d));
            let wins = c.map_or(String::new(), |c| format!("{}/{}", c.wins, c.pairs));
            let p = match c {
                Some(c) => match c.p_value {
                    Some(p) => format!("{}{}", fmt_sig(p), significance_marker(Some(p))),
                    None => c.note.clone(),
                },
                None => String::new(),
            };
            lines.push(format!(
                "{:<40} {:>22} {:>9} {:>6} {:>10}",
                g.key.to_string(),
                ms,
                delta,
                wins,
                p
            ));
        }
        lines.join("\n") + "\n"
    }

    pub fn seeds(&self) -> BTreeSet<u64> {
        self.groups
            .iter()
            .flat_map(|g| g.seeds.iter().copied())
            .collect()
    }

    pub fn write(&self, dir: &Path) -> crate::Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        for (name, body) in [
            ("summary.csv", self.summary_csv()),
            ("percentiles.csv", self.percentiles_csv()),
            ("summary.txt", self.table()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| crate::Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::MetricRow;

    fn entry(lambda: f64, seed: u64, ret: f64) -> RunEntry {
        let mut c = ExperimentConfig::new(Task::Imitate, CellKind::Gru, 2, lambda, seed);
        c.epochs = 1;
        let row = |epoch| MetricRow {
            epoch,
            split: Split::Val,
            task_loss: 0.0,
            psd_loss: 0.0,
            joint_loss: 0.0,
            avg_return: Some(ret),
            wallclock_s: None,
        };
        RunEntry {
            config: c,
            metrics: RunMetrics {
                rows: vec![row(0), row(1)],
                clip_events: Vec::new(),
            },
        }
    }

    #[test]
    fn three_pairs_give_fifty_percent() {
        let mut runs = Vec::new();
        for (seed, (p, b)) in [(2.0, 1.0), (3.0, 2.0), (4.0, 3.0)].into_iter().enumerate() {
            runs.push(entry(0.5, seed as u64, p));
            runs.push(entry(0.0, seed as u64, b));
        }
        assert_eq!(runs.len(), 6);
        let r = summarize(&runs, false).unwrap();
        assert_eq!(r.comparisons.len(), 1);
        let c = &r.comparisons[0];
        assert_eq!(c.pairs, 3);
        assert!((c.rel_delta.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(c.p_value, None);
        assert!(c.note.contains("insufficient pairs"));
    }

    #[test]
    fn identical_metrics_mean_no_improvement() {
        let runs: Vec<RunEntry> = (0..6)
            .flat_map(|s| [entry(0.0, s, 10.0), entry(1.0, s, 10.0)])
            .collect();
        let r = summarize(&runs, false).unwrap();
        assert_eq!(r.comparisons[0].rel_delta, Some(0.0));
        assert_eq!(r.comparisons[0].p_value, Some(1.0));
    }

    #[test]
    fn mismatched_seeds_are_refused() {
        let runs = vec![
            entry(0.0, 1, 1.0),
            entry(0.0, 2, 1.0),
            entry(1.0, 1, 2.0),
            entry(1.0, 3, 2.0),
        ];
        assert!(matches!(
            summarize(&runs, false),
            Err(ReportError::MismatchedSeeds { .. })
        ));
        let partial = summarize(&runs, true).unwrap();
        assert_eq!(partial.comparisons[0].pairs, 1);
    }

    #[test]
    fn single_run_is_flagged() {
        let r = summarize(&[entry(0.0, 1, 91.3)], false).unwrap();
        assert!(r.groups[0].single_run());
        assert_eq!(r.groups[0].std(), 0.0);
        assert!(r.table().contains("91.3 ± 0 (1 run)"));
    }

    #[test]
    fn percentiles_are_sorted() {
        let runs: Vec<RunEntry> = [5.0, 1.0, 3.0, 2.0]
            .iter()
            .enumerate()
            .map(|(s, v)| entry(0.0, s as u64, *v))
            .collect();
        let r = summarize(&runs, false).unwrap();
        let vals: Vec<f64> = r
            .percentiles_csv()
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 5.0]);
    }
}
