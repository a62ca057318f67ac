//! Monte Carlo harness for empirical size, p-value uniformity and power under
//! local alternatives.
//!
//! Replicate `r` draws everything from substreams of the master seed addressed
//! by `[REPLICATE, r, role, …]`, and results are merged in replicate order, so
//! tables do not depend on the number of worker threads.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::bootstrap::{critical_value_sorted, run_test_with_projection, BootstrapConfig, TestReport};
use crate::error::{Error, Result};
use crate::kernel::SymmetricKernel;
use crate::latent_tree::{enumerate_constraints, local_alternative, sample_mvn, setup_covariance, ConstraintMode, Setup};
use crate::rng::{derive_seed, role, substream};
use crate::ustat::{binomial_coefficient, estimate_g, BudgetConfig};

/// Level used for power curves.
pub const POWER_ALPHA: f64 = 0.05;

/// One experiment grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub setup: Setup,
    pub l: usize,
    pub n: usize,
    /// Computational budgets `N`, absolute.
    pub budgets: Vec<f64>,
    pub mode: ConstraintMode,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub shift_grid: Vec<f64>,
    pub boot_replicates: usize,
    pub master_seed: u64,
    /// Fill the `wall_time_s` column; when off it is written as 0.
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults: `l = 8`, `n = 200`, `N = 2n`, 300 replicates, `A = 500`.
    pub fn desk(setup: Setup) -> Self {
        Self {
            setup,
            l: 8,
            n: 200,
            budgets: vec![400.0],
            mode: ConstraintMode::EqualitiesOnly,
            reps: 300,
            alphas: vec![0.01, 0.05, 0.1],
            shift_grid: Vec::new(),
            boot_replicates: 500,
            master_seed: 0,
            record_timing: true,
        }
    }

    fn validate(&self, kernel: &SymmetricKernel) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        if self.budgets.is_empty() {
            return Err(Error::Config("need at least one budget N".into()));
        }
        let total = binomial_coefficient(self.n, kernel.order()) as f64;
        if let Some(b) = self.budgets.iter().find(|&&b| !(b >= 1.0 && b <= total)) {
            return Err(Error::Config(format!(
                "budget N = {b} is outside [1, C({}, {}) = {total}]",
                self.n,
                kernel.order()
            )));
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Config(format!("alpha = {a} must lie in (0, 1)")));
        }
        BootstrapConfig::new(self.boot_replicates, 0.05, 0)?;
        Ok(())
    }

    fn kernel(&self) -> Result<SymmetricKernel> {
        let tree = self.setup.tree(self.l)?;
        enumerate_constraints(&tree, self.mode)?.kernel()
    }
}

/// Which level column a table carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    Size,
    Power,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRow {
    pub setup: Setup,
    pub budget: f64,
    /// `alpha` for size tables, `shift_h` for power tables.
    pub level: f64,
    /// `NaN` for rows whose alternative was not positive definite.
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub reps: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTable {
    pub kind: TableKind,
    pub rows: Vec<SimulationRow>,
}

impl SimulationTable {
    pub fn header(&self) -> &'static str {
        match self.kind {
            TableKind::Size => "setup,N,alpha,rejection_rate,mc_se,reps,wall_time_s",
            TableKind::Power => "setup,N,shift_h,rejection_rate,mc_se,reps,wall_time_s",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(self.header());
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                r.setup, r.budget, r.level, r.rejection_rate, r.mc_se, r.reps, r.wall_time_s
            );
        }
        out
    }

    /// Rows for one budget, in table order.
    pub fn rows_for(&self, budget: f64) -> impl Iterator<Item = &SimulationRow> {
        self.rows.iter().filter(move |r| r.budget == budget)
    }
}

/// Monte Carlo standard error of a rejection rate.
pub fn mc_standard_error(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

/// Kolmogorov–Smirnov distance between the empirical law of `p` and Uniform(0, 1).
pub fn ks_uniform_distance(p: &[f64]) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

// Per-budget outcome of one replicate.
struct BudgetOutcome {
    report: TestReport,
    seconds: f64,
}

fn budget_seed(master: u64, r: usize, what: u64, b: usize) -> u64 {
    derive_seed(master, &[role::REPLICATE, r as u64, what, b as u64])
}

// Runs every budget on one data set, sharing the projection estimate.
fn test_all_budgets(
    cfg: &ExperimentConfig,
    kernel: &SymmetricKernel,
    data: &Array2<f64>,
    r: usize,
) -> Result<Vec<BudgetOutcome>> {
    let start = Instant::now();
    let s1: Vec<usize> = (0..cfg.n).collect();
    let proj = estimate_g(
        data.view(),
        kernel,
        &s1,
        derive_seed(cfg.master_seed, &[role::REPLICATE, r as u64, role::PARTITION]),
    )?;
    let shared = start.elapsed().as_secs_f64() / cfg.budgets.len() as f64;
    cfg.budgets
        .iter()
        .enumerate()
        .map(|(b, &budget)| {
            let t = Instant::now();
            let budget = BudgetConfig::new(cfg.n, kernel.order(), budget, budget_seed(cfg.master_seed, r, role::TUPLES, b))?;
            let boot = BootstrapConfig::new(
                cfg.boot_replicates,
                POWER_ALPHA,
                budget_seed(cfg.master_seed, r, role::MULTIPLIERS, b),
            )?;
            let report = run_test_with_projection(data.view(), kernel, &proj, &budget, &boot)?;
            Ok(BudgetOutcome {
                report,
                seconds: shared + t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn null_replicate(cfg: &ExperimentConfig, kernel: &SymmetricKernel, r: usize) -> Result<Vec<BudgetOutcome>> {
    let start = Instant::now();
    let mut params_rng = substream(cfg.master_seed, &[role::REPLICATE, r as u64, role::PARAMS]);
    let (_, sigma) = setup_covariance(cfg.setup, cfg.l, &mut params_rng)?;
    let mut data_rng = substream(cfg.master_seed, &[role::REPLICATE, r as u64, role::DATA]);
    let data = sample_mvn(&sigma, cfg.n, &mut data_rng)?;
    let prep = start.elapsed().as_secs_f64() / cfg.budgets.len() as f64;
    let mut out = test_all_budgets(cfg, kernel, &data, r)?;
    out.iter_mut().for_each(|o| o.seconds += prep);
    Ok(out)
}

// Collects successful replicates in order, enforcing the 1% failure cap.
fn collect_successes<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed * 100 > total {
        return Err(Error::TooManyFailures {
            failed,
            total,
            first: first.unwrap_or_default(),
        });
    }
    if ok.is_empty() {
        return Err(Error::TooManyFailures {
            failed,
            total,
            first: first.unwrap_or_default(),
        });
    }
    Ok(ok)
}

fn run_null(cfg: &ExperimentConfig) -> Result<Vec<Vec<BudgetOutcome>>> {
    let kernel = cfg.kernel()?;
    cfg.validate(&kernel)?;
    let results: Vec<Result<Vec<BudgetOutcome>>> =
        (0..cfg.reps).into_par_iter().map(|r| null_replicate(cfg, &kernel, r)).collect();
    collect_successes(results)
}

fn rate_row(cfg: &ExperimentConfig, budget: f64, level: f64, rejections: usize, reps: usize, seconds: f64) -> SimulationRow {
    let rate = rejections as f64 / reps as f64;
    SimulationRow {
        setup: cfg.setup,
        budget,
        level,
        rejection_rate: rate,
        mc_se: mc_standard_error(rate, reps),
        reps,
        wall_time_s: if cfg.record_timing { seconds } else { 0.0 },
    }
}

/// Rejection rates under the null for every `(N, α)`.
pub fn empirical_size(cfg: &ExperimentConfig) -> Result<SimulationTable> {
    if cfg.shift_grid.iter().any(|&h| h != 0.0) {
        return Err(Error::Config("size runs take no nonzero shifts".into()));
    }
    let outcomes = run_null(cfg)?;
    let reps = outcomes.len();
    let mut rows = Vec::new();
    for (b, &budget) in cfg.budgets.iter().enumerate() {
        let seconds: f64 = outcomes.iter().map(|o| o[b].seconds).sum();
        let sorted: Vec<(f64, Vec<f64>)> = outcomes
            .iter()
            .map(|o| {
                let mut w = o[b].report.w.clone();
                w.sort_by(f64::total_cmp);
                (o[b].report.t_stat, w)
            })
            .collect();
        for &alpha in &cfg.alphas {
            let rejections = sorted
                .iter()
                .filter(|(t, w)| *t > critical_value_sorted(w, alpha))
                .count();
            rows.push(rate_row(cfg, budget, alpha, rejections, reps, seconds));
        }
    }
    Ok(SimulationTable {
        kind: TableKind::Size,
        rows,
    })
}

/// One p-value per successful replicate, for the first budget.
pub fn pvalue_study(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let first = ExperimentConfig {
        budgets: cfg.budgets.iter().take(1).copied().collect(),
        ..cfg.clone()
    };
    Ok(run_null(&first)?
        .into_iter()
        .map(|o| o[0].report.p_value)
        .collect())
}

/// `p_value` CSV for [`pvalue_study`].
pub fn pvalues_to_csv(p: &[f64]) -> String {
    let mut out = String::from("p_value\n");
    for v in p {
        let _ = writeln!(out, "{v}");
    }
    out
}

// Outcome of one replicate at every shift; `None` marks a non-PD alternative.
type ShiftOutcomes = Vec<Option<Vec<BudgetOutcome>>>;

fn power_replicate(cfg: &ExperimentConfig, kernel: &SymmetricKernel, r: usize) -> Result<ShiftOutcomes> {
    let mut params_rng = substream(cfg.master_seed, &[role::REPLICATE, r as u64, role::PARAMS]);
    let (_, sigma) = setup_covariance(cfg.setup, cfg.l, &mut params_rng)?;
    cfg.shift_grid
        .iter()
        .map(|&h| {
            let t = Instant::now();
            let shifted = match local_alternative(&sigma, h, cfg.n, None) {
                Ok(s) => s,
                Err(Error::NotPositiveDefinite { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            // the same normal draws at every shift
            let mut data_rng = substream(cfg.master_seed, &[role::REPLICATE, r as u64, role::DATA]);
            let data = sample_mvn(&shifted, cfg.n, &mut data_rng)?;
            let prep = t.elapsed().as_secs_f64() / cfg.budgets.len() as f64;
            let mut out = test_all_budgets(cfg, kernel, &data, r)?;
            out.iter_mut().for_each(|o| o.seconds += prep);
            Ok(Some(out))
        })
        .collect()
}

/// Rejection rates at level 0.05 under `Σ + γγᵀ h/√n` for every `(N, h)`.
pub fn empirical_power(cfg: &ExperimentConfig) -> Result<SimulationTable> {
    if cfg.shift_grid.is_empty() {
        return Err(Error::Config("power runs need a non-empty shift grid".into()));
    }
    let kernel = cfg.kernel()?;
    cfg.validate(&kernel)?;
    let results: Vec<Result<ShiftOutcomes>> =
        (0..cfg.reps).into_par_iter().map(|r| power_replicate(cfg, &kernel, r)).collect();
    let outcomes = collect_successes(results)?;
    let reps = outcomes.len();
    let mut rows = Vec::new();
    for (b, &budget) in cfg.budgets.iter().enumerate() {
        for (k, &h) in cfg.shift_grid.iter().enumerate() {
            if outcomes.iter().any(|o| o[k].is_none()) {
                rows.push(SimulationRow {
                    setup: cfg.setup,
                    budget,
                    level: h,
                    rejection_rate: f64::NAN,
                    mc_se: f64::NAN,
                    reps: 0,
                    wall_time_s: 0.0,
                });
                continue;
            }
            let cell = || outcomes.iter().map(|o| &o[k].as_ref().expect("checked above")[b]);
            let rejections = cell().filter(|o| o.report.t_stat > o.report.critical_value).count();
            let seconds = cell().map(|o| o.seconds).sum();
            rows.push(rate_row(cfg, budget, h, rejections, reps, seconds));
        }
    }
    Ok(SimulationTable {
        kind: TableKind::Power,
        rows,
    })
}
