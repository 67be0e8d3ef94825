use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use psdlab::cells::CellKind;
use psdlab::envs::{generate_dataset, DataPolicy, EnvSpec, EnvTag, LdsSpec};
use psdlab::harness::{report, run_sweep, ConfigBuilder, ConfigError, SweepPlan};
use psdlab::predictive_state::FeaturizerKind;
use psdlab::training::train;
use psdlab::Error;

#[derive(Parser)]
#[command(
    name = "psdlab",
    version,
    about = "Recurrent networks with predictive-state decoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an environment and write a dataset file.
    GenData(GenData),
    /// Train one configuration into a run directory.
    Train(TrainArgs),
    /// Run a (cell, k, lambda, phi) grid over paired seeds.
    Sweep(SweepArgs),
    /// Summarize finished run directories.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    env: EnvTag,
    #[arg(long, default_value_t = 50)]
    n_traj: usize,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Observation noise std (pendulum, lds).
    #[arg(long)]
    obs_noise: Option<f64>,
    /// `realizable` selects the noiseless two-dimensional rotation (lds only).
    #[arg(long, default_value = "default")]
    preset: String,
    /// zero | sinusoid | lqr | expert; defaults per environment.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Config keys settable from the command line; they override the file.
#[derive(Args, Clone)]
struct ConfigFlags {
    /// key=value config file.
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    cell: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Dataset file for supervised tasks.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigFlags {
    fn builder(&self) -> Result<ConfigBuilder, Error> {
        let mut b = ConfigBuilder::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            b.merge_text(&text)?;
        }
        let flags: [(&str, Option<String>); 14] = [
            ("task", self.task.clone()),
            ("env", self.env.clone()),
            ("cell", self.cell.clone()),
            ("hidden", self.hidden.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("phi", self.phi.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("n_traj", self.n_traj.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("data", self.data.as_ref().map(|p| p.display().to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                b.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
            b.set(k.trim(), v.trim())?;
        }
        Ok(b)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    #[arg(long, value_delimiter = ',')]
    cells: Vec<CellKind>,
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// Lambda grid; 0 is always added.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    phis: Vec<FeaturizerKind>,
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for summary.csv, percentiles.csv and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn policy_from_name(name: &str, spec: &EnvSpec) -> Result<DataPolicy, Error> {
    Ok(match name {
        "zero" => DataPolicy::Zero,
        "expert" => DataPolicy::Expert,
        "sinusoid" => DataPolicy::Sinusoid {
            amplitude: 0.5,
            frequency: 0.3,
        },
        "lqr" => DataPolicy::Lqr { exploration: 1.0 },
        other => {
            return Err(psdlab::envs::EnvError::UnsupportedPolicy {
                env: spec.tag(),
                policy: other.to_string(),
            }
            .into())
        }
    })
}

fn gen_data(a: GenData) -> Result<(), Error> {
    let mut spec = match (a.env, a.preset.as_str()) {
        (_, "default") => EnvSpec::default_for(a.env),
        (EnvTag::Lds, "realizable") => EnvSpec::Lds(LdsSpec::realizable()),
        (_, other) => {
            return Err(psdlab::envs::EnvError::Config(format!(
                "unknown preset '{other}' for {}",
                a.env
            ))
            .into())
        }
    };
    if let Some(h) = a.horizon {
        spec.set_horizon(h);
    }
    if let Some(n) = a.obs_noise {
        match &mut spec {
            EnvSpec::Pendulum(p) => p.obs_noise = n,
            EnvSpec::Lds(l) => l.obs_noise = n,
            EnvSpec::CartpolePo(_) => {
                return Err(psdlab::envs::EnvError::Config(
                    "cartpole-po has no observation noise".into(),
                )
                .into())
            }
        }
    }
    let policy = match &a.policy {
        Some(p) => policy_from_name(p, &spec)?,
        None => spec.default_policy(),
    };
    let ds = generate_dataset(&spec, &policy, a.n_traj, a.seed, a.parallel)?;
    ds.write(&a.out).map_err(|e| Error::io(&a.out, e))?;
    println!(
        "wrote {} trajectories to {}",
        ds.trajectories.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Error> {
    let config = a.flags.builder()?.build()?;
    let dataset = match &config.data {
        Some(p) => Some(psdlab::envs::Dataset::read(p)?),
        None => None,
    };
    let outcome = train(&config, dataset.as_ref())?;
    let dir = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(psdlab::harness::run_dir_name(&config)));
    outcome.write(&dir)?;
    let s = &outcome.summary;
    match (s.final_val_loss, s.mean_return) {
        (_, Some(r)) => println!("{}: mean average return {r:.4}", dir.display()),
        (Some(v), None) => println!("{}: final validation loss {v:.6e}", dir.display()),
        _ => println!(
            "{}: final train loss {:.6e}",
            dir.display(),
            s.final_train_loss
        ),
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Error> {
    let mut b = a.flags.builder()?;
    // The grid supplies cell, k, lambda and seed when the base config does not.
    if let (None, Some(cell)) = (b.get("cell"), a.cells.first()) {
        b.set("cell", &cell.to_string())?;
    }
    if b.get("k").is_none() {
        b.set("k", &a.ks.first().copied().unwrap_or(2).to_string())?;
    }
    if b.get("lambda").is_none() {
        b.set("lambda", "0")?;
    }
    if b.get("seed").is_none() {
        b.set("seed", &a.seeds[0].to_string())?;
    }
    let base = b.build()?;
    let out = base.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
    let mut plan = SweepPlan::new(base, a.lambdas, a.seeds);
    if !a.cells.is_empty() {
        plan.cells = a.cells;
    }
    if !a.ks.is_empty() {
        plan.ks = a.ks;
    }
    if !a.phis.is_empty() {
        plan.phis = a.phis;
    }
    plan.parallelism = a.parallel.max(1);
    for c in plan.runs() {
        let mut probe = c.clone();
        probe.out = None;
        probe.validate()?;
    }
    let outcome = run_sweep(&plan, Some(&out))?;
    for f in outcome.failures() {
        eprintln!(
            "warning: {} failed: {}",
            psdlab::harness::run_dir_name(&f.config),
            f.result.as_ref().unwrap_err()
        );
    }
    print!("{}", outcome.report.table());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<(), Error> {
    let r = report(&a.runs)?;
    if let Some(dir) = &a.out {
        r.write(dir)?;
    }
    print!("{}", r.table());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error[{}]: {}",
                e.category(),
                e.to_string().replace('\n', " ")
            );
            ExitCode::from(2)
        }
    }
}
