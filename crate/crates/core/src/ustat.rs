//! Bernoulli-sampled incomplete U-statistics, divide-and-conquer estimates of
//! the Hájek projection, empirical variances and the studentized max statistic.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{ConstraintKind, KernelScratch, SymmetricKernel};
use crate::rng::{role, substream};

/// Rows of work handed to one rayon task. Results do not depend on it.
const CHUNK: usize = 64;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial_coefficient(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Sample size, kernel order, computational budget and tuple-sampling seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetConfig {
    n: usize,
    m: usize,
    budget: f64,
    seed: u64,
}

impl BudgetConfig {
    pub fn new(n: usize, m: usize, budget: f64, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("kernel order must be at least 2, got {m}")));
        }
        if n < m {
            return Err(Error::Input(format!(
                "sample size {n} is smaller than the kernel order {m}"
            )));
        }
        let total = binomial_coefficient(n, m) as f64;
        if !(budget >= 1.0 && budget <= total) {
            return Err(Error::Config(format!(
                "budget N = {budget} must lie in [1, C({n},{m}) = {total}]"
            )));
        }
        Ok(Self { n, m, budget, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of index tuples `|I_{n,m}|`.
    pub fn total_tuples(&self) -> u128 {
        binomial_coefficient(self.n, self.m)
    }

    /// Bernoulli selection probability `ρ = N / C(n, m)`.
    pub fn rho(&self) -> f64 {
        (self.budget / self.total_tuples() as f64).min(1.0)
    }

    /// `n / N`.
    pub fn alpha_n(&self) -> f64 {
        self.n as f64 / self.budget
    }
}

/// The realized Bernoulli selection: distinct increasing `m`-tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleSample {
    m: usize,
    flat: Vec<u32>,
}

impl TupleSample {
    /// Wraps explicit tuples, validating that they are increasing and distinct.
    pub fn from_tuples(m: usize, tuples: &[Vec<usize>]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut flat = Vec::with_capacity(m * tuples.len());
        for t in tuples {
            if t.len() != m || t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Input(format!("tuple {t:?} is not an increasing {m}-tuple")));
            }
            if !seen.insert(t.clone()) {
                return Err(Error::Input(format!("duplicate tuple {t:?}")));
            }
            flat.extend(t.iter().map(|&i| i as u32));
        }
        if flat.is_empty() {
            return Err(Error::Input("empty tuple sample".into()));
        }
        Ok(Self { m, flat })
    }

    /// `N̂`.
    pub fn n_hat(&self) -> usize {
        self.flat.len() / self.m
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn tuples(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.flat.chunks_exact(self.m)
    }

    pub fn get(&self, r: usize) -> &[u32] {
        &self.flat[r * self.m..(r + 1) * self.m]
    }
}

/// Draws `N̂ ~ Bin(C(n,m), ρ)` (redrawn while zero) and then `N̂` distinct
/// tuples uniformly without replacement. Tuples are returned sorted.
pub fn sample_tuples(cfg: &BudgetConfig) -> TupleSample {
    let mut rng = substream(cfg.seed, &[role::TUPLES]);
    let total = cfg.total_tuples();
    let rho = cfg.rho();
    let n_hat: u64 = if rho >= 1.0 {
        total as u64
    } else {
        let trials = u64::try_from(total).unwrap_or(u64::MAX);
        let dist = Binomial::new(trials, rho).expect("rho lies in (0, 1)");
        loop {
            let k = dist.sample(&mut rng);
            if k > 0 {
                break k;
            }
        }
    };
    let (n, m) = (cfg.n, cfg.m);

    let mut tuples: Vec<Vec<u32>> = if rho > 0.5 {
        // dense regime: enumerate everything and keep a uniform subset
        let all = all_combinations(n, m);
        let mut keep = index::sample(&mut rng, all.len(), n_hat as usize).into_vec();
        keep.sort_unstable();
        keep.into_iter().map(|i| all[i].clone()).collect()
    } else {
        let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(n_hat as usize);
        let mut out = Vec::with_capacity(n_hat as usize);
        while out.len() < n_hat as usize {
            let mut t: Vec<u32> = index::sample(&mut rng, n, m).into_iter().map(|i| i as u32).collect();
            t.sort_unstable();
            if seen.insert(t.clone()) {
                out.push(t);
            }
        }
        out
    };
    tuples.sort_unstable();
    TupleSample {
        m,
        flat: tuples.into_iter().flatten().collect(),
    }
}

/// Every increasing `m`-tuple of `0..n`, lexicographic.
pub fn all_combinations(n: usize, m: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if m > n {
        return out;
    }
    let mut cur: Vec<u32> = (0..m as u32).collect();
    loop {
        out.push(cur.clone());
        // advance the rightmost index that still has room
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if (cur[i] as usize) < n - m + i {
                break;
            }
        }
        cur[i] += 1;
        for j in i + 1..m {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn check_data(data: ArrayView2<f64>, kernel: &SymmetricKernel) -> Result<()> {
    if data.ncols() != kernel.sample_dim() {
        return Err(Error::Input(format!(
            "data has {} columns but the kernel expects {}",
            data.ncols(),
            kernel.sample_dim()
        )));
    }
    if !data.is_standard_layout() {
        return Err(Error::Input("data must be a row-major matrix".into()));
    }
    Ok(())
}

fn row<'a>(data: ArrayView2<'a, f64>, i: usize) -> &'a [f64] {
    let l = data.ncols();
    &data.to_slice().expect("standard layout checked")[i * l..(i + 1) * l]
}

/// Kernel evaluations on every sampled tuple and their mean `U′`.
pub fn compute_u_prime(
    data: ArrayView2<f64>,
    kernel: &SymmetricKernel,
    ts: &TupleSample,
) -> Result<(Array1<f64>, Array2<f64>)> {
    check_data(data, kernel)?;
    if ts.width() != kernel.order() {
        return Err(Error::Input(format!(
            "tuples have width {} but the kernel has order {}",
            ts.width(),
            kernel.order()
        )));
    }
    if ts.n_hat() == 0 {
        return Err(Error::Input("empty tuple sample".into()));
    }
    if let Some(&max) = ts.flat.iter().max() {
        if max as usize >= data.nrows() {
            return Err(Error::Input(format!(
                "tuple index {max} exceeds the {} data rows",
                data.nrows()
            )));
        }
    }
    let p = kernel.len();
    let n_hat = ts.n_hat();
    let mut h = Array2::<f64>::zeros((n_hat, p));
    if p > 0 {
        let slice = h.as_slice_mut().expect("fresh array is contiguous");
        slice
            .par_chunks_mut(CHUNK * p)
            .enumerate()
            .for_each(|(chunk, out)| {
                let mut scratch = KernelScratch::default();
                let mut args: Vec<&[f64]> = Vec::with_capacity(kernel.order());
                for (k, dst) in out.chunks_exact_mut(p).enumerate() {
                    let r = chunk * CHUNK + k;
                    args.clear();
                    args.extend(ts.get(r).iter().map(|&i| row(data, i as usize)));
                    kernel.eval_into(&args, dst, &mut scratch);
                }
            });
    }
    let u_prime = column_mean(&h);
    Ok((u_prime, h))
}

// Fixed-order column mean.
fn column_mean(a: &Array2<f64>) -> Array1<f64> {
    let rows = a.nrows().max(1) as f64;
    let mut sum = Array1::<f64>::zeros(a.ncols());
    for r in a.axis_iter(Axis(0)) {
        sum += &r;
    }
    sum / rows
}

/// Divide-and-conquer estimates `ĝ_{i1}` of the Hájek projection for `i1 ∈ S1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionEstimates {
    /// `n1 × p`.
    pub g_hat: Array2<f64>,
    /// Column means of `g_hat`.
    pub g_bar: Array1<f64>,
    pub s1: Vec<usize>,
    /// Blocks per index, `⌊(n-1)/(m-1)⌋`.
    pub k: usize,
}

impl ProjectionEstimates {
    pub fn n1(&self) -> usize {
        self.s1.len()
    }
}

/// For each `i1 ∈ s1`, shuffles the other `n-1` indices with a seeded stream,
/// cuts them into `K` blocks of `m-1` (dropping leftovers) and averages the
/// kernel over `(X_i1, X_block)`.
pub fn estimate_g(
    data: ArrayView2<f64>,
    kernel: &SymmetricKernel,
    s1: &[usize],
    seed: u64,
) -> Result<ProjectionEstimates> {
    check_data(data, kernel)?;
    let n = data.nrows();
    let m = kernel.order();
    if s1.len() < 2 {
        return Err(Error::Input(format!("S1 must contain at least 2 indices, got {}", s1.len())));
    }
    if let Some(&bad) = s1.iter().find(|&&i| i >= n) {
        return Err(Error::Input(format!("S1 index {bad} exceeds the {n} data rows")));
    }
    if m < 2 || n < m {
        return Err(Error::Input(format!(
            "need at least {m} samples for a kernel of order {m}, got {n}"
        )));
    }
    let k = (n - 1) / (m - 1);
    if k == 0 {
        return Err(Error::Input("no complete block for the projection estimate".into()));
    }
    let p = kernel.len();
    let mut g_hat = Array2::<f64>::zeros((s1.len(), p));
    if p > 0 {
        let slice = g_hat.as_slice_mut().expect("fresh array is contiguous");
        slice
            .par_chunks_mut(p)
            .zip(s1.par_iter())
            .for_each_init(
                || (KernelScratch::default(), vec![0.0; p], Vec::with_capacity(n)),
                |(scratch, buf, others), (dst, &i1)| {
                    others.clear();
                    others.extend((0..n).filter(|&j| j != i1));
                    if m > 2 {
                        let mut rng = substream(seed, &[role::PARTITION, i1 as u64]);
                        others.shuffle(&mut rng);
                    }
                    let mut args: Vec<&[f64]> = Vec::with_capacity(m);
                    dst.fill(0.0);
                    for block in others.chunks_exact(m - 1).take(k) {
                        args.clear();
                        args.push(row(data, i1));
                        args.extend(block.iter().map(|&j| row(data, j)));
                        kernel.eval_into(&args, buf, scratch);
                        for (d, v) in dst.iter_mut().zip(buf.iter()) {
                            *d += v;
                        }
                    }
                    let inv = 1.0 / k as f64;
                    dst.iter_mut().for_each(|d| *d *= inv);
                },
            );
    }
    let g_bar = column_mean(&g_hat);
    Ok(ProjectionEstimates {
        g_hat,
        g_bar,
        s1: s1.to_vec(),
        k,
    })
}

/// `σ̂²_g` and `σ̂²_h`, both with the `1/count` normalization.
pub fn empirical_variances(
    proj: &ProjectionEstimates,
    h_values: &Array2<f64>,
    u_prime: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    (
        centered_second_moment(&proj.g_hat, &proj.g_bar),
        centered_second_moment(h_values, u_prime),
    )
}

fn centered_second_moment(a: &Array2<f64>, center: &Array1<f64>) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(a.ncols());
    for r in a.axis_iter(Axis(0)) {
        acc.iter_mut()
            .zip(r.iter().zip(center.iter()))
            .for_each(|(s, (x, c))| *s += (x - c) * (x - c));
    }
    acc / a.nrows().max(1) as f64
}

/// `σ̂²_j = m²·σ̂²_{g,j} + (n/N)·σ̂²_{h,j}`.
pub fn combined_variance(sigma_g_sq: &Array1<f64>, sigma_h_sq: &Array1<f64>, m: usize, alpha_n: f64) -> Array1<f64> {
    let m2 = (m * m) as f64;
    sigma_g_sq
        .iter()
        .zip(sigma_h_sq.iter())
        .map(|(g, h)| m2 * g + alpha_n * h)
        .collect()
}

/// `max_j √n·U′_j/σ̂_j`, where each equality contributes both `U′_j` and `-U′_j`.
pub fn test_statistic(
    u_prime: &Array1<f64>,
    sigma_sq: &Array1<f64>,
    n: usize,
    kinds: &[ConstraintKind],
    labels: &[&str],
) -> Result<f64> {
    if let Some(j) = sigma_sq.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateCoordinate {
            label: labels.get(j).map_or_else(|| format!("#{j}"), |s| s.to_string()),
        });
    }
    let sqrt_n = (n as f64).sqrt();
    let mut best = f64::NEG_INFINITY;
    for ((&u, &s2), kind) in u_prime.iter().zip(sigma_sq.iter()).zip(kinds) {
        let z = sqrt_n * u / s2.sqrt();
        let z = match kind {
            ConstraintKind::Equality => z.max(-z),
            ConstraintKind::Inequality => z,
        };
        best = best.max(z);
    }
    Ok(best)
}

/// Everything the bootstrap needs from one pass over the data.
#[derive(Clone, Debug, PartialEq)]
pub struct UStatResult {
    pub u_prime: Array1<f64>,
    /// `N̂ × p`.
    pub h_values: Array2<f64>,
    pub sigma_g_sq: Array1<f64>,
    pub sigma_h_sq: Array1<f64>,
    pub sigma_sq: Array1<f64>,
    pub t_stat: f64,
}

/// Runs the statistic pipeline for a given projection estimate and budget.
pub fn ustat_with_projection(
    data: ArrayView2<f64>,
    kernel: &SymmetricKernel,
    proj: &ProjectionEstimates,
    budget: &BudgetConfig,
) -> Result<(TupleSample, UStatResult)> {
    if budget.n() != data.nrows() || budget.m() != kernel.order() {
        return Err(Error::Input(format!(
            "budget configured for n={}, m={} but data has {} rows and kernel order {}",
            budget.n(),
            budget.m(),
            data.nrows(),
            kernel.order()
        )));
    }
    let ts = sample_tuples(budget);
    let (u_prime, h_values) = compute_u_prime(data, kernel, &ts)?;
    let (sigma_g_sq, sigma_h_sq) = empirical_variances(proj, &h_values, &u_prime);
    let sigma_sq = combined_variance(&sigma_g_sq, &sigma_h_sq, kernel.order(), budget.alpha_n());
    let labels: Vec<&str> = kernel.labels().collect();
    let t_stat = test_statistic(&u_prime, &sigma_sq, budget.n(), &kernel.kinds(), &labels)?;
    Ok((
        ts,
        UStatResult {
            u_prime,
            h_values,
            sigma_g_sq,
            sigma_h_sq,
            sigma_sq,
            t_stat,
        },
    ))
}

/// Chooses `S1`: every index when `n1 = n`, otherwise a seeded uniform subset.
pub fn choose_s1(n: usize, n1: usize, seed: u64) -> Result<Vec<usize>> {
    if n1 < 2 || n1 > n {
        return Err(Error::Config(format!("n1 = {n1} must lie in [2, {n}]")));
    }
    if n1 == n {
        return Ok((0..n).collect());
    }
    let mut rng = substream(seed, &[role::SUBSET]);
    let mut s1 = index::sample(&mut rng, n, n1).into_vec();
    s1.sort_unstable();
    Ok(s1)
}
