use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polytest_core::bootstrap::MultiplierBootstrap;
use polytest_core::latent_tree::{sample_mvn, setup_covariance};
use polytest_core::rng::substream;
use polytest_core::ustat::{estimate_g, sample_tuples, ustat_with_projection};
use polytest_core::{enumerate_constraints, run_test, BootstrapConfig, BudgetConfig, ConstraintMode, Setup};

fn kernel_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_eval");
    let mut rng = substream(1, &[0]);
    let (tree, sigma) = setup_covariance(Setup::A, 8, &mut rng).unwrap();
    let data = sample_mvn(&sigma, 4, &mut rng).unwrap();
    let rows: Vec<&[f64]> = data.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    for mode in [ConstraintMode::EqualitiesOnly, ConstraintMode::All] {
        let kernel = enumerate_constraints(&tree, mode).unwrap().kernel().unwrap();
        let args = &rows[..kernel.order()];
        group.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| kernel.eval(black_box(args)).unwrap())
        });
    }
    group.finish();
}

fn tuple_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_tuples");
    for (n, m, budget) in [(200, 2, 400.0), (200, 4, 400.0), (500, 4, 5000.0), (12, 4, 400.0)] {
        let cfg = BudgetConfig::new(n, m, budget, 3).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("n{n}_m{m}_N{budget}")), |b| {
            b.iter(|| sample_tuples(black_box(&cfg)))
        });
    }
    group.finish();
}

fn bootstrap_draws(c: &mut Criterion) {
    let mut rng = substream(2, &[0]);
    let (tree, sigma) = setup_covariance(Setup::A, 8, &mut rng).unwrap();
    let data = sample_mvn(&sigma, 200, &mut rng).unwrap();
    let kernel = enumerate_constraints(&tree, ConstraintMode::All).unwrap().kernel().unwrap();
    let budget = BudgetConfig::new(200, kernel.order(), 400.0, 5).unwrap();
    let s1: Vec<usize> = (0..200).collect();
    let proj = estimate_g(data.view(), &kernel, &s1, 6).unwrap();
    let (_, res) = ustat_with_projection(data.view(), &kernel, &proj, &budget).unwrap();
    let mb = MultiplierBootstrap::new(&res, &proj, kernel.order(), budget.alpha_n(), &kernel.kinds()).unwrap();
    c.bench_function("bootstrap_draws/A500", |b| b.iter(|| mb.draws(500, black_box(7))));
}

fn full_test(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_test");
    group.sample_size(10);
    let mut rng = substream(3, &[0]);
    let (tree, sigma) = setup_covariance(Setup::A, 8, &mut rng).unwrap();
    let data = sample_mvn(&sigma, 200, &mut rng).unwrap();
    let boot = BootstrapConfig::new(500, 0.05, 9).unwrap();
    for mode in [ConstraintMode::EqualitiesOnly, ConstraintMode::All] {
        let kernel = enumerate_constraints(&tree, mode).unwrap().kernel().unwrap();
        let budget = BudgetConfig::new(200, kernel.order(), 400.0, 8).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| run_test(data.view(), &kernel, &budget, &boot).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernel_eval, tuple_sampling, bootstrap_draws, full_test);
criterion_main!(benches);
