//! Sequential versus rayon-parallel execution of the two data-parallel
//! workloads: dataset generation and seed sweeps. Build with
//! `--no-default-features` to measure the pure sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psdlab::cells::CellKind;
use psdlab::envs::{generate_dataset, EnvSpec, EnvTag};
use psdlab::harness::{run_sweep, ExperimentConfig, SweepPlan};
use psdlab::training::Task;

fn threads() -> Vec<usize> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    if n > 1 {
        vec![1, n]
    } else {
        vec![1, 2]
    }
}

fn dataset_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_dataset");
    for tag in [EnvTag::Pendulum, EnvTag::CartpolePo] {
        let spec = EnvSpec::default_for(tag);
        for t in threads() {
            group.bench_with_input(BenchmarkId::new(tag.to_string(), t), &t, |b, &t| {
                b.iter(|| {
                    generate_dataset(&spec, &spec.default_policy(), 64, black_box(3), t).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let mut base = ExperimentConfig::new(Task::Filter, CellKind::Gru, 2, 0.1, 0);
    base.hidden = 8;
    base.epochs = 2;
    base.n_traj = 10;
    base.horizon = Some(30);
    base.record_wallclock = false;
    let mut group = c.benchmark_group("run_sweep");
    group.sample_size(10);
    for t in threads() {
        let mut plan = SweepPlan::new(base.clone(), vec![0.1], vec![1, 2, 3, 4]);
        plan.parallelism = t;
        group.bench_with_input(BenchmarkId::from_parameter(t), &plan, |b, plan| {
            b.iter(|| run_sweep(plan, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dataset_generation, seed_sweep);
criterion_main!(benches);
