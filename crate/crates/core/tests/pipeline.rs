use ndarray::Array2;
use polytest_core::latent_tree::{sample_mvn, setup_covariance};
use polytest_core::rng::substream;
use polytest_core::simulate::{empirical_size, ExperimentConfig};
use polytest_core::{
    enumerate_constraints, run_test, run_test_n1, BootstrapConfig, BudgetConfig, ConstraintMode, Setup, TestReport,
};

fn null_data(l: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = substream(seed, &[1]);
    let (_, sigma) = setup_covariance(Setup::A, l, &mut rng).unwrap();
    sample_mvn(&sigma, n, &mut rng).unwrap()
}

fn report(threads: usize, n1: usize) -> TestReport {
    let data = null_data(6, 60, 3);
    let tree = Setup::A.tree(6).unwrap();
    let kernel = enumerate_constraints(&tree, ConstraintMode::All).unwrap().kernel().unwrap();
    let budget = BudgetConfig::new(60, kernel.order(), 120.0, 77).unwrap();
    let boot = BootstrapConfig::new(300, 0.05, 78).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_test_n1(data.view(), &kernel, &budget, &boot, n1).unwrap())
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let one = report(1, 60);
    let three = report(3, 60);
    assert_eq!(one, three);
    assert_eq!(report(1, 25), report(4, 25));
}

#[test]
fn report_fields_are_consistent() {
    let r = report(1, 40);
    assert_eq!(r.n, 60);
    assert_eq!(r.n1, 40);
    assert_eq!(r.m, 4);
    assert_eq!(r.per_constraint.len(), 2 * 15 + 4 * 20);
    assert_eq!(r.w.len(), 300);
    assert!(r.p_value >= 1.0 / 301.0 && r.p_value <= 1.0);
    assert_eq!(r.reject, r.t_stat > r.critical_value);
    assert_eq!(r.reject_at(0.05), r.reject);
    let exceed = r.w.iter().filter(|&&w| w >= r.t_stat).count();
    assert!((r.p_value - (1 + exceed) as f64 / 301.0).abs() < 1e-15);
}

#[test]
fn tetrad_test_runs_on_star_data() {
    let data = null_data(5, 80, 9);
    let kernel = enumerate_constraints(&Setup::A.tree(5).unwrap(), ConstraintMode::EqualitiesOnly)
        .unwrap()
        .kernel()
        .unwrap();
    assert_eq!(kernel.order(), 2);
    let budget = BudgetConfig::new(80, 2, 160.0, 1).unwrap();
    let boot = BootstrapConfig::new(200, 0.1, 2).unwrap();
    let a = run_test(data.view(), &kernel, &budget, &boot).unwrap();
    let b = run_test(data.view(), &kernel, &budget, &boot).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_constraint.len(), 10);
}

#[test]
fn simulation_tables_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig {
        l: 5,
        n: 40,
        budgets: vec![80.0, 120.0],
        reps: 6,
        boot_replicates: 100,
        master_seed: 5,
        record_timing: false,
        ..ExperimentConfig::desk(Setup::C)
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| empirical_size(&cfg).unwrap())
    };
    assert_eq!(run(1).to_csv(), run(3).to_csv());
}
