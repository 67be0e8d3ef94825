//! End-to-end training experiments at their default scale. These compare
//! medians over paired seeds, so they are slow and can legitimately fail.

use psdlab::cells::CellKind;
use psdlab::harness::report::GroupKey;
use psdlab::harness::stats::median;
use psdlab::harness::{run_sweep, ExperimentConfig, Report, SweepPlan};
use psdlab::predictive_state::FeaturizerKind;
use psdlab::training::Task;

fn medians(report: &Report, k: usize, lambda: f64) -> (f64, f64) {
    let values = |key: GroupKey| {
        let g = report
            .groups
            .iter()
            .find(|g| g.key == key)
            .expect("completed group");
        median(&g.values)
    };
    let base = values(GroupKey {
        cell: CellKind::Gru,
        k: None,
        phi: None,
        lambda: 0.0,
    });
    let treated = values(GroupKey {
        cell: CellKind::Gru,
        k: Some(k),
        phi: Some(FeaturizerKind::Identity),
        lambda,
    });
    (base, treated)
}

#[test]
fn pendulum_gru_k4_beats_baseline_at_epoch_200() {
    let mut base = ExperimentConfig::new(Task::Filter, CellKind::Gru, 4, 0.0, 1);
    base.record_wallclock = false;
    assert_eq!((base.hidden, base.epochs), (32, 200));
    let plan = SweepPlan::new(base, vec![0.5], (1..=5).collect());
    let outcome = run_sweep(&plan, None).unwrap();
    let (baseline, treated) = medians(&outcome.report, 4, 0.5);
    assert!(
        treated < baseline,
        "median final loss {treated:.4e} vs baseline {baseline:.4e}\n{}",
        outcome.report.table()
    );
}

#[test]
fn cartpole_imitation_median_return_at_least_baseline() {
    let lambdas = [1.0, 0.1, 0.01, 0.001];
    let mut base = ExperimentConfig::new(Task::Imitate, CellKind::Gru, 2, 0.0, 1);
    base.record_wallclock = false;
    base.epochs = 60;
    base.n_traj = 20;
    let plan = SweepPlan::new(base, lambdas.to_vec(), (1..=15).collect());
    let outcome = run_sweep(&plan, None).unwrap();
    let (baseline, best) = lambdas
        .iter()
        .map(|&l| medians(&outcome.report, 2, l))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(
        best >= baseline,
        "best median return {best:.2} vs baseline {baseline:.2}\n{}",
        outcome.report.table()
    );
}
