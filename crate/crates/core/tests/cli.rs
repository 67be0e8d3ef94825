//! The `psdlab` binary end to end: files written, exit codes, error lines.

use std::path::Path;
use std::process::{Command, Output};

use psdlab::envs::Dataset;
use psdlab::harness::load_run;

fn psdlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psdlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_category(o: &Output, category: &str) {
    assert_eq!(o.status.code(), Some(2), "stderr: {}", stderr(o));
    let err = stderr(o);
    let line = err.lines().last().unwrap_or_default();
    assert!(line.starts_with(&format!("error[{category}]: ")), "{err}");
}

const TINY: [&str; 8] = [
    "--hidden",
    "4",
    "--epochs",
    "2",
    "--n-traj",
    "4",
    "--horizon",
    "20",
];

#[test]
fn gen_data_then_train_writes_a_complete_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = psdlab(
        tmp.path(),
        &[
            "gen-data",
            "--env",
            "pendulum",
            "--n-traj",
            "4",
            "--horizon",
            "20",
            "--seed",
            "3",
            "--out",
            "p.txt",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let ds = Dataset::read(&tmp.path().join("p.txt")).unwrap();
    assert_eq!(ds.trajectories.len(), 4);
    assert!(ds.trajectories.iter().all(|t| t.len() == 20));

    let mut args = vec![
        "train", "--task", "filter", "--cell", "gru", "--k", "2", "--lambda", "0.5", "--seed", "1",
    ];
    args.extend(["--data", "p.txt", "--out", "run"]);
    args.extend(TINY);
    let o = psdlab(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.csv", "params.txt", "metadata.json", "config.txt"] {
        assert!(tmp.path().join("run").join(f).is_file(), "{f}");
    }
    let entry = load_run(&tmp.path().join("run")).unwrap();
    assert_eq!(entry.config.lambda, 0.5);
    // epoch 0 plus two training epochs, train and val rows each
    assert_eq!(entry.metrics.rows.len(), 6);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("exp.cfg"),
        "# tiny filtering run\ntask = filter\ncell = lstm\nk = 3\nlambda = 0.1\nseed = 7\n",
    )
    .unwrap();
    let mut args = vec!["train", "exp.cfg", "--lambda", "0.2", "--out", "run"];
    args.extend(TINY);
    let o = psdlab(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let entry = load_run(&tmp.path().join("run")).unwrap();
    assert_eq!(entry.config.lambda, 0.2);
    assert_eq!(entry.config.k, 3);
    assert_eq!(entry.config.seed, 7);
}

#[test]
fn missing_required_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = psdlab(
        tmp.path(),
        &[
            "train", "--task", "filter", "--cell", "gru", "--k", "2", "--seed", "1",
        ],
    );
    assert_category(&o, "config");
    assert!(stderr(&o).contains("lambda"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "train",
        "--task",
        "filter",
        "--cell",
        "gru",
        "--k",
        "2",
        "--lambda",
        "0",
        "--seed",
        "1",
        "--set",
        "momentum=0.9",
    ];
    assert_category(&psdlab(tmp.path(), &args), "config");
}

#[test]
fn out_of_range_k_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "train", "--task", "filter", "--cell", "gru", "--k", "11", "--lambda", "1", "--seed", "1",
    ];
    assert_category(&psdlab(tmp.path(), &args), "config");
}

#[test]
fn corrupt_dataset_is_an_env_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.txt"), "PSDLAB-TRAJ-v1\nnot json\n").unwrap();
    let args = [
        "train", "--task", "filter", "--cell", "gru", "--k", "2", "--lambda", "0", "--seed", "1",
        "--data", "bad.txt",
    ];
    assert_category(&psdlab(tmp.path(), &args), "env");
}

#[test]
fn missing_dataset_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "train", "--task", "filter", "--cell", "gru", "--k", "2", "--lambda", "0", "--seed", "1",
        "--data", "nope.txt",
    ];
    assert_category(&psdlab(tmp.path(), &args), "io");
}

#[test]
fn unsupported_policy_is_an_env_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = psdlab(
        tmp.path(),
        &[
            "gen-data", "--env", "lds", "--policy", "wiggle", "--out", "x.txt",
        ],
    );
    assert_category(&o, "env");
}

#[test]
fn report_on_an_empty_directory_is_a_report_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_category(&psdlab(tmp.path(), &["report", "empty"]), "report");
}

#[test]
fn sweep_then_report_reproduces_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep",
        "--task",
        "filter",
        "--cells",
        "gru",
        "--ks",
        "2",
        "--lambdas",
        "0.5",
    ];
    args.extend([
        "--seeds",
        "1,2",
        "--set",
        "record_wallclock=false",
        "--out",
        "sw",
    ]);
    args.extend(TINY);
    let o = psdlab(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(table.contains("baseline"), "{table}");

    let o = psdlab(
        tmp.path(),
        &[
            "report",
            "sw/gru-baseline-s1",
            "sw/gru-baseline-s2",
            "sw/gru-k2-lambda0.5-identity-s1",
            "sw/gru-k2-lambda0.5-identity-s2",
            "--out",
            "rep",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |p: &str| std::fs::read(tmp.path().join(p)).unwrap();
    assert_eq!(read("sw/summary.csv"), read("rep/summary.csv"));
    assert_eq!(read("sw/summary.txt"), read("rep/summary.txt"));
}
