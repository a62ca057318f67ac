//! Gaussian multiplier bootstrap for the studentized max statistic.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ConstraintKind, SymmetricKernel};
use crate::rng::{role, substream};
use crate::ustat::{choose_s1, estimate_g, ustat_with_projection, BudgetConfig, ProjectionEstimates, UStatResult};

/// Number of multiplier sets and the test level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alpha: f64, seed: u64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::Config("need at least one bootstrap replicate".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        Ok(Self {
            replicates,
            alpha,
            seed,
        })
    }
}

/// The `A` bootstrap maxima with the derived critical value and p-value.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapDraws {
    pub w: Vec<f64>,
    pub c_w: f64,
    pub p_value: f64,
}

/// Centered, pre-scaled snapshot of the kernel and projection values.
///
/// One draw computes
/// `U# = m/√n1 · Σ ξ_i (ĝ_i − ḡ) + √(n/N)/√N̂ · Σ ξ′_ι (h_ι − U′)`
/// and returns `W = max_j U#_j / σ̂_j` over the equality-expanded coordinates.
#[derive(Clone, Debug)]
pub struct MultiplierBootstrap {
    g_centered: Array2<f64>,
    h_centered: Array2<f64>,
    g_scale: f64,
    h_scale: f64,
    inv_sigma: Array1<f64>,
    two_sided: Vec<bool>,
}

impl MultiplierBootstrap {
    pub fn new(
        res: &UStatResult,
        proj: &ProjectionEstimates,
        m: usize,
        alpha_n: f64,
        kinds: &[ConstraintKind],
    ) -> Result<Self> {
        let p = res.u_prime.len();
        if proj.g_hat.ncols() != p || kinds.len() != p {
            return Err(Error::Input("projection, kernel values and constraint kinds disagree on p".into()));
        }
        if res.sigma_sq.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Input("bootstrap requires positive variances".into()));
        }
        let g_centered = &proj.g_hat - &proj.g_bar;
        let h_centered = &res.h_values - &res.u_prime;
        Ok(Self {
            g_scale: m as f64 / (proj.n1() as f64).sqrt(),
            h_scale: alpha_n.sqrt() / (res.h_values.nrows() as f64).sqrt(),
            inv_sigma: res.sigma_sq.mapv(|s| 1.0 / s.sqrt()),
            two_sided: kinds.iter().map(|k| *k == ConstraintKind::Equality).collect(),
            g_centered,
            h_centered,
        })
    }

    pub fn dim(&self) -> usize {
        self.inv_sigma.len()
    }

    /// One realization of the unstudentized vector `U#`.
    pub fn draw_u_sharp<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.accumulate(rng, &mut out);
        out
    }

    fn accumulate<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Array1<f64>) {
        out.fill(0.0);
        let acc = out.as_slice_mut().expect("contiguous");
        for (matrix, scale) in [(&self.g_centered, self.g_scale), (&self.h_centered, self.h_scale)] {
            let cols = matrix.ncols();
            let flat = matrix.as_slice().expect("owned arrays are contiguous");
            for row in flat.chunks_exact(cols.max(1)) {
                let xi: f64 = rng.sample(StandardNormal);
                let w = xi * scale;
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += w * v;
                }
            }
        }
    }

    /// One bootstrap maximum `W`.
    pub fn draw_w<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut buf = Array1::zeros(self.dim());
        self.draw_w_with(rng, &mut buf)
    }

    fn draw_w_with<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Array1<f64>) -> f64 {
        self.accumulate(rng, buf);
        let mut best = f64::NEG_INFINITY;
        for ((u, s), two) in buf.iter().zip(self.inv_sigma.iter()).zip(&self.two_sided) {
            let z = u * s;
            best = best.max(if *two { z.abs() } else { z });
        }
        best
    }

    /// `A` draws; replicate `a` reads substream `(seed, [MULTIPLIERS, a])`.
    pub fn draws(&self, replicates: usize, seed: u64) -> Vec<f64> {
        (0..replicates)
            .into_par_iter()
            .map_init(
                || Array1::zeros(self.dim()),
                |buf, a| {
                    let mut rng = substream(seed, &[role::MULTIPLIERS, a as u64]);
                    self.draw_w_with(&mut rng, buf)
                },
            )
            .collect()
    }
}

/// The `⌈(1−α)A⌉`-th order statistic of `w`.
pub fn critical_value(w: &[f64], alpha: f64) -> f64 {
    assert!(!w.is_empty(), "critical value of an empty sample");
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    critical_value_sorted(&sorted, alpha)
}

/// [`critical_value`] for an already sorted sample.
pub fn critical_value_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let a = sorted.len();
    // the small epsilon guards against (1-α)·A landing a hair above an integer
    let rank = ((1.0 - alpha) * a as f64 - 1e-9).ceil().clamp(1.0, a as f64) as usize;
    sorted[rank - 1]
}

/// `(1 + #{W_a ≥ T}) / (A + 1)`.
pub fn p_value(w: &[f64], t_stat: f64) -> f64 {
    let exceed = w.iter().filter(|&&x| x >= t_stat).count();
    (1 + exceed) as f64 / (w.len() + 1) as f64
}

/// Per-constraint summary in a [`TestReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub label: String,
    pub kind: ConstraintKind,
    pub u_prime: f64,
    pub sigma_g_sq: f64,
    pub sigma_h_sq: f64,
}

/// Outcome of one test with full provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub p_value: f64,
    pub t_stat: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub budget: f64,
    pub n_hat: usize,
    pub n: usize,
    pub n1: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub replicates: usize,
    pub seed: u64,
    pub boot_seed: u64,
    pub per_constraint: Vec<ConstraintSummary>,
    /// Bootstrap maxima, in replicate order.
    #[serde(skip)]
    pub w: Vec<f64>,
}

impl TestReport {
    /// Reject decision at another level using the same draws.
    pub fn reject_at(&self, alpha: f64) -> bool {
        self.t_stat > critical_value(&self.w, alpha)
    }
}

/// Full test with `S1 = {0..n-1}`.
pub fn run_test(
    data: ArrayView2<f64>,
    kernel: &SymmetricKernel,
    budget: &BudgetConfig,
    boot: &BootstrapConfig,
) -> Result<TestReport> {
    run_test_n1(data, kernel, budget, boot, data.nrows())
}

/// Full test with a projection subset of size `n1`.
pub fn run_test_n1(
    data: ArrayView2<f64>,
    kernel: &SymmetricKernel,
    budget: &BudgetConfig,
    boot: &BootstrapConfig,
    n1: usize,
) -> Result<TestReport> {
    let s1 = choose_s1(data.nrows(), n1, budget.seed())?;
    let proj = estimate_g(data, kernel, &s1, budget.seed())?;
    run_test_with_projection(data, kernel, &proj, budget, boot)
}

/// Test for a precomputed projection estimate; lets several budgets share one.
pub fn run_test_with_projection(
    data: ArrayView2<f64>,
    kernel: &SymmetricKernel,
    proj: &ProjectionEstimates,
    budget: &BudgetConfig,
    boot: &BootstrapConfig,
) -> Result<TestReport> {
    if kernel.is_empty() {
        return Err(Error::Input("empty constraint set".into()));
    }
    let (ts, res) = ustat_with_projection(data, kernel, proj, budget)?;
    let kinds = kernel.kinds();
    let mb = MultiplierBootstrap::new(&res, proj, kernel.order(), budget.alpha_n(), &kinds)?;
    let w = mb.draws(boot.replicates, boot.seed);
    let c_w = critical_value(&w, boot.alpha);
    let per_constraint = kernel
        .coordinates()
        .iter()
        .enumerate()
        .map(|(j, c)| ConstraintSummary {
            label: c.label.clone(),
            kind: c.kind,
            u_prime: res.u_prime[j],
            sigma_g_sq: res.sigma_g_sq[j],
            sigma_h_sq: res.sigma_h_sq[j],
        })
        .collect();
    Ok(TestReport {
        p_value: p_value(&w, res.t_stat),
        t_stat: res.t_stat,
        critical_value: c_w,
        reject: res.t_stat > c_w,
        alpha: boot.alpha,
        budget: budget.budget(),
        n_hat: ts.n_hat(),
        n: budget.n(),
        n1: proj.n1(),
        m: kernel.order(),
        replicates: boot.replicates,
        seed: budget.seed(),
        boot_seed: boot.seed,
        per_constraint,
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(g: Array2<f64>, h: Array2<f64>, sigma_sq: Array1<f64>) -> (UStatResult, ProjectionEstimates) {
        let p = g.ncols();
        let u_prime = h.mean_axis(ndarray::Axis(0)).unwrap();
        let g_bar = g.mean_axis(ndarray::Axis(0)).unwrap();
        (
            UStatResult {
                u_prime,
                h_values: h,
                sigma_g_sq: Array1::zeros(p),
                sigma_h_sq: Array1::zeros(p),
                sigma_sq,
                t_stat: 0.0,
            },
            ProjectionEstimates {
                s1: (0..g.nrows()).collect(),
                g_hat: g,
                g_bar,
                k: 1,
            },
        )
    }

    #[test]
    fn critical_value_order_statistic() {
        let w: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(critical_value(&w, 0.05), 95.0);
        assert_eq!(critical_value(&w, 0.5), 50.0);
        let w: Vec<f64> = (0..1000).map(|i| (i as f64 * 7.3) % 11.0).collect();
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(critical_value(&w, 0.9999), min);
        assert_eq!(critical_value(&[3.5; 17], 0.2), 3.5);
    }

    #[test]
    fn p_value_bounds_and_extremes() {
        let w = [0.1, 0.5, 0.9, 1.2];
        assert_eq!(p_value(&w, 10.0), 1.0 / 5.0);
        assert_eq!(p_value(&w, -10.0), 1.0);
        let mut last = 1.0;
        for t in [-1.0, 0.1, 0.3, 0.5, 1.0, 1.2, 5.0] {
            let p = p_value(&w, t);
            assert!(p <= last && p >= 1.0 / 5.0);
            last = p;
        }
    }

    #[test]
    fn constant_columns_contribute_nothing() {
        let g = array![[1.0, 3.0], [1.0, -1.0], [1.0, 2.0]];
        let h = array![[5.0, 0.5], [5.0, 1.5]];
        let (res, proj) = toy(g, h, array![1.0, 1.0]);
        let mb = MultiplierBootstrap::new(&res, &proj, 2, 0.5, &[ConstraintKind::Inequality; 2]).unwrap();
        let mut rng = substream(1, &[]);
        for _ in 0..20 {
            let u = mb.draw_u_sharp(&mut rng);
            assert_eq!(u[0], 0.0);
            assert_ne!(u[1], 0.0);
        }
    }

    #[test]
    fn two_point_projection_variance() {
        // N̂ = 1 with h = U′, ĝ = (−1, 1): U#_h = 0, Var(U#) = m²·1
        let g = array![[-1.0], [1.0]];
        let h = array![[0.7]];
        let (res, proj) = toy(g, h, array![1.0]);
        let m = 2;
        let mb = MultiplierBootstrap::new(&res, &proj, m, 3.0, &[ConstraintKind::Inequality]).unwrap();
        let mut rng = substream(5, &[]);
        let draws = 40_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let u = mb.draw_u_sharp(&mut rng)[0];
            s += u;
            s2 += u * u;
        }
        let mean = s / draws as f64;
        let var = s2 / draws as f64 - mean * mean;
        let target = (m * m) as f64;
        // sd of a sample variance of normals: target·sqrt(2/draws)
        assert!((var - target).abs() < 5.0 * target * (2.0 / draws as f64).sqrt(), "var {var}");
        assert!(mean.abs() < 5.0 * (target / draws as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn draws_are_reproducible() {
        let g = array![[0.0, 1.0], [2.0, -1.0], [1.0, 0.5]];
        let h = array![[1.0, 0.0], [3.0, 2.0]];
        let (res, proj) = toy(g, h, array![1.0, 2.0]);
        let mb = MultiplierBootstrap::new(&res, &proj, 2, 1.0, &[ConstraintKind::Equality; 2]).unwrap();
        assert_eq!(mb.draws(50, 9), mb.draws(50, 9));
        assert_ne!(mb.draws(50, 9), mb.draws(50, 10));
        assert!(mb.draws(50, 9).iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(0, 0.05, 0).is_err());
        assert!(BootstrapConfig::new(10, 1.0, 0).is_err());
        assert!(BootstrapConfig::new(10, 0.0, 0).is_err());
        assert!(BootstrapConfig::new(10, 0.05, 0).is_ok());
    }
}
