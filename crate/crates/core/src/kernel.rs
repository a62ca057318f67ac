//! Polynomial constraints and their symmetric unbiased kernel estimators.
//!
//! A polynomial `f(θ)` is written with explicit (possibly repeated) index
//! tuples, `f = a0 + Σ a_(i1..ir) θ_i1 ⋯ θ_ir`. Given unbiased estimators of
//! every coordinate `θ_i` that each consume `η` samples, the product term is
//! estimated by feeding the `r` factors consecutive disjoint blocks of
//! samples, and the resulting order-`η·s` program is symmetrized by averaging
//! over all orderings of its arguments.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported kernel order. Symmetrization cost grows like `m!`.
pub const MAX_ORDER: usize = 6;

/// Position of `(r, c)` in the column-major lower-triangular half-vectorization
/// of an `l × l` symmetric matrix. The arguments may be given in either order.
pub fn vech_index(l: usize, r: usize, c: usize) -> usize {
    let (r, c) = if r >= c { (r, c) } else { (c, r) };
    debug_assert!(r < l);
    // column c starts at Σ_{k<c} (l - k)
    c * l - c * c.saturating_sub(1) / 2 + (r - c)
}

/// Inverse of [`vech_index`]: the `(row, col)` pair with `row >= col`.
pub fn vech_pair(l: usize, index: usize) -> (usize, usize) {
    let mut start = 0;
    for c in 0..l {
        let len = l - c;
        if index < start + len {
            return (c + index - start, c);
        }
        start += len;
    }
    panic!("vech index {index} out of range for dimension {l}");
}

/// Number of half-vectorized coordinates of an `l × l` symmetric matrix.
pub fn vech_len(l: usize) -> usize {
    l * (l + 1) / 2
}

/// One monomial `coef · θ_i1 ⋯ θ_ir`. Indices are kept sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub indices: Vec<usize>,
}

/// A multivariate polynomial in `dim` parameter coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    constant: f64,
    terms: Vec<Term>,
    dim: usize,
    total_degree: usize,
}

impl PolynomialSpec {
    /// Builds the canonical form: index tuples sorted, equal tuples merged,
    /// zero coefficients dropped, total degree recomputed.
    pub fn new<I>(constant: f64, terms: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<usize>)>,
    {
        if dim == 0 {
            return Err(Error::Input("polynomial dimension must be positive".into()));
        }
        if !constant.is_finite() {
            return Err(Error::Input("non-finite constant term".into()));
        }
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (coef, mut indices) in terms {
            if !coef.is_finite() {
                return Err(Error::Input("non-finite coefficient".into()));
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
                return Err(Error::Input(format!(
                    "coordinate index {bad} out of range for dimension {dim}"
                )));
            }
            if indices.is_empty() {
                // a bare number folds into the constant
                merged.entry(Vec::new()).and_modify(|c| *c += coef).or_insert(coef);
                continue;
            }
            indices.sort_unstable();
            *merged.entry(indices).or_insert(0.0) += coef;
        }
        let constant = constant + merged.remove(&Vec::new()).unwrap_or(0.0);
        let terms: Vec<Term> = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(indices, coef)| Term { coef, indices })
            .collect();
        let total_degree = terms.iter().map(|t| t.indices.len()).max().unwrap_or(0);
        Ok(Self {
            constant,
            terms,
            dim,
            total_degree,
        })
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_degree(&self) -> usize {
        self.total_degree
    }

    /// Evaluates the polynomial at `theta`.
    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.dim, "theta has wrong dimension");
        self.constant
            + self
                .terms
                .iter()
                .map(|t| t.coef * t.indices.iter().map(|&i| theta[i]).product::<f64>())
                .sum::<f64>()
    }

    /// Returns `-f`.
    pub fn negated(&self) -> Self {
        Self {
            constant: -self.constant,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coef: -t.coef,
                    indices: t.indices.clone(),
                })
                .collect(),
            dim: self.dim,
            total_degree: self.total_degree,
        }
    }
}

/// Unbiased estimators of every parameter coordinate from `eta` samples.
pub trait BaseEstimator: Send + Sync + fmt::Debug {
    /// Number of samples each coordinate estimate consumes.
    fn eta(&self) -> usize;
    /// Number of parameter coordinates `d`.
    fn coordinates(&self) -> usize;
    /// Ambient dimension of one sample.
    fn sample_dim(&self) -> usize;
    /// Estimate of coordinate `coord` from exactly `eta` samples.
    fn estimate(&self, coord: usize, block: &[&[f64]]) -> f64;
}

/// `x ↦ x_u · x_v`, the one-sample unbiased estimator of `σ_uv` for centered data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CovEntry {
    pub u: usize,
    pub v: usize,
}

impl CovEntry {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        x[self.u] * x[self.v]
    }
}

/// Covariance entries of an `l`-dimensional centered vector, indexed by
/// [`vech_index`].
#[derive(Clone, Debug)]
pub struct CovarianceEstimators {
    l: usize,
    entries: Vec<CovEntry>,
}

impl CovarianceEstimators {
    pub fn new(l: usize) -> Self {
        let entries = (0..vech_len(l))
            .map(|i| {
                let (r, c) = vech_pair(l, i);
                CovEntry { u: r, v: c }
            })
            .collect();
        Self { l, entries }
    }

    pub fn entry(&self, coord: usize) -> CovEntry {
        self.entries[coord]
    }
}

impl BaseEstimator for CovarianceEstimators {
    fn eta(&self) -> usize {
        1
    }

    fn coordinates(&self) -> usize {
        self.entries.len()
    }

    fn sample_dim(&self) -> usize {
        self.l
    }

    #[inline]
    fn estimate(&self, coord: usize, block: &[&[f64]]) -> f64 {
        self.entries[coord].eval(block[0])
    }
}

/// The unsymmetrized estimator: factor `b` of every term reads sample block `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelProgram {
    constant: f64,
    terms: Vec<Term>,
    eta: usize,
    degree: usize,
}

impl KernelProgram {
    /// Number of samples the program reads, `η · s`.
    pub fn order(&self) -> usize {
        self.eta * self.degree
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Evaluates the program on `samples` in the given order. Arguments past
    /// the ones a term needs are ignored.
    pub fn eval(&self, base: &dyn BaseEstimator, samples: &[&[f64]]) -> f64 {
        debug_assert!(samples.len() >= self.order());
        let eta = self.eta;
        let mut total = self.constant;
        for term in &self.terms {
            let mut prod = term.coef;
            for (b, &coord) in term.indices.iter().enumerate() {
                prod *= base.estimate(coord, &samples[b * eta..(b + 1) * eta]);
            }
            total += prod;
        }
        total
    }
}

/// Builds the unsymmetrized order-`η·s` estimator of `poly`.
pub fn build_unsymmetrized(poly: &PolynomialSpec, base: &dyn BaseEstimator) -> Result<KernelProgram> {
    if poly.dim() != base.coordinates() {
        return Err(Error::Input(format!(
            "polynomial has {} coordinates but the base estimator provides {}",
            poly.dim(),
            base.coordinates()
        )));
    }
    if base.eta() == 0 {
        return Err(Error::Config("base estimator must consume at least one sample".into()));
    }
    Ok(KernelProgram {
        constant: poly.constant(),
        terms: poly.terms().to_vec(),
        eta: base.eta(),
        degree: poly.total_degree(),
    })
}

/// A kernel program symmetrized at a given order (possibly above its natural
/// order, in which case the value is the average over argument subsets).
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricCoord {
    program: KernelProgram,
    order: usize,
}

/// Symmetrizes `program` by averaging over all `m!` orderings of `m` arguments.
pub fn symmetrize(program: KernelProgram, m: usize) -> Result<SymmetricCoord> {
    check_order(m)?;
    if m < program.order().max(1) {
        return Err(Error::Config(format!(
            "symmetrization order {m} is below the program order {}",
            program.order()
        )));
    }
    Ok(SymmetricCoord { program, order: m })
}

/// Raises the order of a symmetric coordinate to `m`. The lifted kernel is the
/// average of the original over all size-`m'` subsets of its `m` arguments.
pub fn lift_order(coord: SymmetricCoord, m: usize) -> Result<SymmetricCoord> {
    check_order(m)?;
    if m < coord.order {
        return Err(Error::Config(format!(
            "cannot lift a kernel of order {} down to {m}",
            coord.order
        )));
    }
    Ok(SymmetricCoord {
        program: coord.program,
        order: m,
    })
}

fn check_order(m: usize) -> Result<()> {
    if m > MAX_ORDER {
        return Err(Error::Config(format!(
            "kernel order {m} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

impl SymmetricCoord {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn program(&self) -> &KernelProgram {
        &self.program
    }

    /// Direct evaluation: the program averaged over every permutation of the
    /// arguments. Averaging over subsets for lifted orders falls out of this,
    /// since arguments past the program order are ignored.
    pub fn eval(&self, base: &dyn BaseEstimator, samples: &[&[f64]]) -> f64 {
        assert_eq!(samples.len(), self.order, "wrong number of kernel arguments");
        let canon = canonical_order(samples);
        let mut buf: Vec<&[f64]> = vec![&[]; self.order];
        let mut total = 0.0;
        let mut count = 0usize;
        for perm in permutations(self.order) {
            for (slot, &p) in perm.iter().enumerate() {
                buf[slot] = samples[canon[p]];
            }
            total += self.program.eval(base, &buf);
            count += 1;
        }
        total / count as f64
    }
}

/// Whether a constraint is `f = 0` or `f ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// A labeled polynomial constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
    pub poly: PolynomialSpec,
}

/// Per-coordinate data of a [`SymmetricKernel`].
#[derive(Clone, Debug)]
pub struct KernelCoordinate {
    pub label: String,
    pub kind: ConstraintKind,
    pub coord: SymmetricCoord,
}

/// Vector-valued symmetric kernel of a common order, one coordinate per constraint.
#[derive(Clone, Debug)]
pub struct SymmetricKernel {
    base: Arc<dyn BaseEstimator>,
    order: usize,
    coords: Vec<KernelCoordinate>,
    compiled: Compiled,
}

impl SymmetricKernel {
    /// Builds the kernel for `constraints`. The common order is `η` times the
    /// largest total degree (at least 2); lower-degree coordinates are lifted.
    pub fn from_constraints(constraints: &[Constraint], base: Arc<dyn BaseEstimator>) -> Result<Self> {
        Self::with_order(constraints, base, None)
    }

    /// Like [`SymmetricKernel::from_constraints`] but with an explicit order,
    /// which must be at least the natural one.
    pub fn with_order(
        constraints: &[Constraint],
        base: Arc<dyn BaseEstimator>,
        order: Option<usize>,
    ) -> Result<Self> {
        let programs = constraints
            .iter()
            .map(|c| build_unsymmetrized(&c.poly, base.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let natural = programs.iter().map(|p| p.order()).max().unwrap_or(0).max(2);
        let order = order.unwrap_or(natural);
        if order < natural {
            return Err(Error::Config(format!(
                "requested kernel order {order} is below the required order {natural}"
            )));
        }
        check_order(order)?;
        let coords = constraints
            .iter()
            .zip(programs)
            .map(|(c, program)| {
                let own = program.order().max(1);
                let coord = lift_order(symmetrize(program, own)?, order)?;
                Ok(KernelCoordinate {
                    label: c.label.clone(),
                    kind: c.kind,
                    coord,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let compiled = Compiled::new(&coords, base.eta(), order);
        Ok(Self {
            base,
            order,
            coords,
            compiled,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coordinates `p`.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn sample_dim(&self) -> usize {
        self.base.sample_dim()
    }

    pub fn base(&self) -> &dyn BaseEstimator {
        self.base.as_ref()
    }

    pub fn coordinates(&self) -> &[KernelCoordinate] {
        &self.coords
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.coords.iter().map(|c| c.label.as_str())
    }

    pub fn kinds(&self) -> Vec<ConstraintKind> {
        self.coords.iter().map(|c| c.kind).collect()
    }

    /// Evaluates every coordinate on `order` samples.
    pub fn eval(&self, samples: &[&[f64]]) -> Result<Vec<f64>> {
        if samples.len() != self.order {
            return Err(Error::Input(format!(
                "kernel of order {} received {} samples",
                self.order,
                samples.len()
            )));
        }
        let l = self.sample_dim();
        if let Some(bad) = samples.iter().position(|s| s.len() != l) {
            return Err(Error::Input(format!(
                "sample {bad} has dimension {} but the kernel expects {l}",
                samples[bad].len()
            )));
        }
        let mut out = vec![0.0; self.len()];
        let mut scratch = KernelScratch::default();
        self.eval_into(samples, &mut out, &mut scratch);
        Ok(out)
    }

    /// Unchecked hot-path evaluation into `out` (length `p`).
    pub fn eval_into(&self, samples: &[&[f64]], out: &mut [f64], scratch: &mut KernelScratch) {
        self.compiled.eval(self.base.as_ref(), samples, out, scratch);
    }
}

/// Reusable buffers for [`SymmetricKernel::eval_into`].
#[derive(Default, Debug)]
pub struct KernelScratch {
    table: Vec<f64>,
    canon: Vec<usize>,
}

// Evaluation plan. Symmetrizing a product term over S_M is the same as
// averaging it over injective placements of its r factor blocks into the M
// arguments; placements that only swap factors with equal coordinate index
// give identical products and are merged with a multiplicity weight.
#[derive(Clone, Debug)]
struct Compiled {
    eta: usize,
    // all ordered eta-tuples of distinct argument positions
    blocks: Vec<Vec<u8>>,
    // theta coordinates any term reads
    used: Vec<usize>,
    coords: Vec<CompiledCoord>,
}

#[derive(Clone, Debug)]
struct CompiledCoord {
    constant: f64,
    terms: Vec<CompiledTerm>,
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    coef: f64,
    // column of `used` for each factor
    cols: Vec<u32>,
    weights: Vec<f64>,
    // placements.len() == weights.len() * cols.len(), block ids
    placements: Vec<u32>,
}

impl Compiled {
    fn new(coords: &[KernelCoordinate], eta: usize, order: usize) -> Self {
        let blocks = ordered_tuples(order, eta);
        let mut used: Vec<usize> = coords
            .iter()
            .flat_map(|c| c.coord.program.terms.iter().flat_map(|t| t.indices.iter().copied()))
            .collect();
        used.sort_unstable();
        used.dedup();
        let col_of = |i: usize| used.binary_search(&i).expect("coordinate collected above") as u32;

        let mut plan_cache: BTreeMap<Vec<usize>, (Vec<f64>, Vec<u32>)> = BTreeMap::new();
        let compiled = coords
            .iter()
            .map(|c| CompiledCoord {
                constant: c.coord.program.constant,
                terms: c
                    .coord
                    .program
                    .terms
                    .iter()
                    .map(|t| {
                        let pattern = equality_pattern(&t.indices);
                        let (weights, placements) = plan_cache
                            .entry(pattern.clone())
                            .or_insert_with(|| placement_plan(&pattern, &blocks, order, eta))
                            .clone();
                        CompiledTerm {
                            coef: t.coef,
                            cols: t.indices.iter().map(|&i| col_of(i)).collect(),
                            weights,
                            placements,
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            eta,
            blocks,
            used,
            coords: compiled,
        }
    }

    fn eval(&self, base: &dyn BaseEstimator, samples: &[&[f64]], out: &mut [f64], scratch: &mut KernelScratch) {
        debug_assert_eq!(out.len(), self.coords.len());
        // Canonical argument order makes the result exactly permutation invariant.
        scratch.canon.clear();
        scratch.canon.extend(0..samples.len());
        scratch.canon.sort_by(|&a, &b| cmp_samples(samples[a], samples[b]));

        let ncols = self.used.len();
        scratch.table.clear();
        scratch.table.resize(self.blocks.len() * ncols, 0.0);
        let mut block_buf: Vec<&[f64]> = Vec::with_capacity(self.eta);
        for (b, positions) in self.blocks.iter().enumerate() {
            block_buf.clear();
            block_buf.extend(positions.iter().map(|&p| samples[scratch.canon[p as usize]]));
            let row = &mut scratch.table[b * ncols..(b + 1) * ncols];
            for (slot, &coord) in row.iter_mut().zip(&self.used) {
                *slot = base.estimate(coord, &block_buf);
            }
        }

        let table = &scratch.table;
        for (value, coord) in out.iter_mut().zip(&self.coords) {
            let mut total = coord.constant;
            for term in &coord.terms {
                let r = term.cols.len();
                let mut acc = 0.0;
                for (a, &w) in term.weights.iter().enumerate() {
                    let place = &term.placements[a * r..(a + 1) * r];
                    let mut prod = w;
                    for (&blk, &col) in place.iter().zip(&term.cols) {
                        prod *= table[blk as usize * ncols + col as usize];
                    }
                    acc += prod;
                }
                total += term.coef * acc;
            }
            *value = total;
        }
    }
}

// Groups equal indices: (3,3,7,9,9) -> (0,0,1,2,2).
fn equality_pattern(indices: &[usize]) -> Vec<usize> {
    let mut pattern = Vec::with_capacity(indices.len());
    let mut group = 0;
    for (k, &i) in indices.iter().enumerate() {
        if k > 0 && i != indices[k - 1] {
            group += 1;
        }
        pattern.push(group);
    }
    pattern
}

// Placements of r = pattern.len() factor blocks into `order` arguments, one
// representative per class of factor swaps within equal-index groups.
fn placement_plan(pattern: &[usize], blocks: &[Vec<u8>], order: usize, eta: usize) -> (Vec<f64>, Vec<u32>) {
    let r = pattern.len();
    let injections = falling_factorial(order, r * eta) as f64;
    let multiplicity: f64 = {
        let mut m = 1.0;
        let mut run = 0usize;
        for k in 0..r {
            if k > 0 && pattern[k] == pattern[k - 1] {
                run += 1;
            } else {
                run = 1;
            }
            m *= run as f64;
        }
        m
    };
    let weight = multiplicity / injections;
    let mut weights = Vec::new();
    let mut placements = Vec::new();
    let mut chosen: Vec<u32> = Vec::with_capacity(r);
    fn recurse(
        k: usize,
        pattern: &[usize],
        blocks: &[Vec<u8>],
        occupied: u32,
        chosen: &mut Vec<u32>,
        weight: f64,
        weights: &mut Vec<f64>,
        placements: &mut Vec<u32>,
    ) {
        if k == pattern.len() {
            weights.push(weight);
            placements.extend_from_slice(chosen);
            return;
        }
        for (id, blk) in blocks.iter().enumerate() {
            let mask = blk.iter().fold(0u32, |m, &p| m | (1 << p));
            if occupied & mask != 0 {
                continue;
            }
            if k > 0 && pattern[k] == pattern[k - 1] && (id as u32) <= chosen[k - 1] {
                continue;
            }
            chosen.push(id as u32);
            recurse(k + 1, pattern, blocks, occupied | mask, chosen, weight, weights, placements);
            chosen.pop();
        }
    }
    recurse(0, pattern, blocks, 0, &mut chosen, weight, &mut weights, &mut placements);
    (weights, placements)
}

fn falling_factorial(n: usize, k: usize) -> u64 {
    (0..k).map(|i| (n - i) as u64).product()
}

// All ordered k-tuples of distinct elements of 0..n, lexicographic.
fn ordered_tuples(n: usize, k: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(n: usize, k: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..n as u8 {
            if !cur.contains(&i) {
                cur.push(i);
                go(n, k, cur, out);
                cur.pop();
            }
        }
    }
    go(n, k, &mut cur, &mut out);
    out
}

/// All permutations of `0..m` in lexicographic order.
pub fn permutations(m: usize) -> Vec<Vec<usize>> {
    ordered_tuples(m, m)
        .into_iter()
        .map(|p| p.into_iter().map(usize::from).collect())
        .collect()
}

fn cmp_samples(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn canonical_order(samples: &[&[f64]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| cmp_samples(samples[a], samples[b]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// θ_i estimated by x_i from a single sample.
    #[derive(Debug)]
    struct Identity(usize);

    impl BaseEstimator for Identity {
        fn eta(&self) -> usize {
            1
        }
        fn coordinates(&self) -> usize {
            self.0
        }
        fn sample_dim(&self) -> usize {
            self.0
        }
        fn estimate(&self, coord: usize, block: &[&[f64]]) -> f64 {
            block[0][coord]
        }
    }

    fn tetrad(l: usize, u: usize, v: usize, w: usize, z: usize) -> PolynomialSpec {
        PolynomialSpec::new(
            0.0,
            [
                (1.0, vec![vech_index(l, u, v), vech_index(l, w, z)]),
                (-1.0, vec![vech_index(l, u, z), vech_index(l, v, w)]),
            ],
            vech_len(l),
        )
        .unwrap()
    }

    #[test]
    fn vech_roundtrip() {
        for l in 1..7 {
            let mut seen = vec![false; vech_len(l)];
            for c in 0..l {
                for r in c..l {
                    let i = vech_index(l, r, c);
                    assert_eq!(vech_index(l, c, r), i);
                    assert_eq!(vech_pair(l, i), (r, c));
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
        // column-major: (0,0),(1,0),(2,0),(1,1),(2,1),(2,2)
        assert_eq!(vech_index(3, 1, 1), 3);
        assert_eq!(vech_index(3, 2, 1), 4);
    }

    #[test]
    fn canonical_form_merges_and_drops() {
        let p = PolynomialSpec::new(
            1.0,
            [(2.0, vec![1, 0]), (1.0, vec![0, 1]), (3.0, vec![2]), (-3.0, vec![2]), (0.0, vec![0, 0, 0])],
            3,
        )
        .unwrap();
        assert_eq!(p.terms(), &[Term { coef: 3.0, indices: vec![0, 1] }]);
        assert_eq!(p.total_degree(), 2);
        assert_eq!(p.constant(), 1.0);
        assert!(PolynomialSpec::new(0.0, [(1.0, vec![3])], 3).is_err());
    }

    #[test]
    fn cov_entry_symmetric() {
        let x = [1.5, -2.0, 3.0];
        assert_eq!(CovEntry { u: 0, v: 2 }.eval(&x), CovEntry { u: 2, v: 0 }.eval(&x));
    }

    #[test]
    fn breve_product_of_two_coordinates() {
        let poly = PolynomialSpec::new(0.0, [(1.0, vec![0, 1])], 2).unwrap();
        let base = Identity(2);
        let prog = build_unsymmetrized(&poly, &base).unwrap();
        assert_eq!(prog.order(), 2);
        let x = [2.0, 3.0];
        let y = [5.0, 7.0];
        // x1 * y2
        assert_eq!(prog.eval(&base, &[&x, &y]), 2.0 * 7.0);
        let sym = symmetrize(prog, 2).unwrap();
        // (x1 y2 + y1 x2) / 2
        assert_eq!(sym.eval(&base, &[&x, &y]), (2.0 * 7.0 + 5.0 * 3.0) / 2.0);
    }

    #[test]
    fn constant_program() {
        let poly = PolynomialSpec::new(4.5, [], 2).unwrap();
        let base = Identity(2);
        let prog = build_unsymmetrized(&poly, &base).unwrap();
        assert_eq!(prog.order(), 0);
        assert_eq!(prog.eval(&base, &[&[1.0, 2.0]]), 4.5);
        let sym = symmetrize(prog, 3).unwrap();
        assert_eq!(sym.eval(&base, &[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]), 4.5);
    }

    #[test]
    fn tetrad_breve_matches_hand_expansion() {
        let l = 4;
        let (u, v, w, z) = (0, 1, 2, 3);
        let base = CovarianceEstimators::new(l);
        let prog = build_unsymmetrized(&tetrad(l, u, v, w, z), &base).unwrap();
        let x1 = [0.3, -1.2, 2.0, 0.7];
        let x2 = [1.1, 0.4, -0.5, 2.2];
        let expected = x1[u] * x1[v] * x2[w] * x2[z] - x1[u] * x1[z] * x2[v] * x2[w];
        assert!((prog.eval(&base, &[&x1, &x2]) - expected).abs() < 1e-15);

        let sym = symmetrize(prog, 2).unwrap();
        let expected_sym = 0.5
            * ((x1[u] * x1[v] * x2[w] * x2[z] - x1[u] * x1[z] * x2[v] * x2[w])
                + (x2[u] * x2[v] * x1[w] * x1[z] - x2[u] * x2[z] * x1[v] * x1[w]));
        assert!((sym.eval(&base, &[&x1, &x2]) - expected_sym).abs() < 1e-14);
    }

    fn tetrad_kernel(l: usize) -> SymmetricKernel {
        let c = Constraint {
            label: "t".into(),
            kind: ConstraintKind::Equality,
            poly: tetrad(l, 0, 1, 2, 3),
        };
        SymmetricKernel::from_constraints(&[c], Arc::new(CovarianceEstimators::new(l))).unwrap()
    }

    #[test]
    fn tetrad_kernel_hand_value() {
        let k = tetrad_kernel(4);
        let x1 = [1.0, 2.0, 3.0, 4.0];
        let x2 = [1.0, 1.0, 1.0, 1.0];
        // ½[(1·2·1·1 − 1·4·1·1) + (1·1·3·4 − 1·1·2·3)] = 2
        assert_eq!(k.eval(&[&x1, &x2]).unwrap(), vec![2.0]);
        assert_eq!(k.eval(&[&x2, &x2]).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_kernel_gives_empty_vector() {
        let k = SymmetricKernel::from_constraints(&[], Arc::new(CovarianceEstimators::new(3))).unwrap();
        assert!(k.is_empty());
        assert_eq!(k.eval(&[&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]]).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let k = tetrad_kernel(4);
        assert!(matches!(k.eval(&[&[1.0, 2.0, 3.0], &[1.0; 4]]), Err(Error::Input(_))));
        assert!(matches!(k.eval(&[&[1.0; 4]]), Err(Error::Input(_))));
    }

    #[test]
    fn lift_to_same_order_is_identity() {
        let base = Identity(2);
        let poly = PolynomialSpec::new(0.5, [(1.0, vec![0, 1]), (-2.0, vec![1])], 2).unwrap();
        let sym = symmetrize(build_unsymmetrized(&poly, &base).unwrap(), 2).unwrap();
        let lifted = lift_order(sym.clone(), 2).unwrap();
        let x = [0.2, -1.0];
        let y = [3.0, 0.7];
        assert_eq!(sym.eval(&base, &[&x, &y]), lifted.eval(&base, &[&x, &y]));
    }

    #[test]
    fn lifted_scalar_product() {
        // h(x, y) = xy on scalars, lifted to three arguments
        let base = Identity(1);
        let poly = PolynomialSpec::new(0.0, [(1.0, vec![0, 0])], 1).unwrap();
        let sym = symmetrize(build_unsymmetrized(&poly, &base).unwrap(), 2).unwrap();
        let lifted = lift_order(sym, 3).unwrap();
        let v = lifted.eval(&base, &[&[1.0], &[2.0], &[3.0]]);
        assert!((v - 11.0 / 3.0).abs() < 1e-15);

        let c = Constraint {
            label: "xy".into(),
            kind: ConstraintKind::Inequality,
            poly,
        };
        let k = SymmetricKernel::with_order(&[c], Arc::new(Identity(1)), Some(3)).unwrap();
        let fast = k.eval(&[&[1.0], &[2.0], &[3.0]]).unwrap()[0];
        assert!((fast - 11.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lifted_tetrad_on_copies() {
        let base = CovarianceEstimators::new(4);
        let sym = symmetrize(build_unsymmetrized(&tetrad(4, 0, 1, 2, 3), &base).unwrap(), 2).unwrap();
        let x = [0.9, -0.4, 1.3, 2.1];
        let original = sym.eval(&base, &[&x, &x]);
        let lifted = lift_order(sym, 4).unwrap();
        assert_eq!(lifted.eval(&base, &[&x, &x, &x, &x]), original);
    }

    #[test]
    fn order_cap() {
        let base = Identity(1);
        let poly = PolynomialSpec::new(0.0, [(1.0, vec![0; 7])], 1).unwrap();
        let prog = build_unsymmetrized(&poly, &base).unwrap();
        assert!(matches!(symmetrize(prog, 7), Err(Error::Config(_))));
        let c = Constraint {
            label: "big".into(),
            kind: ConstraintKind::Equality,
            poly,
        };
        assert!(matches!(
            SymmetricKernel::from_constraints(&[c], Arc::new(Identity(1))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn placement_weights_sum_to_one() {
        for (pattern, order) in [(vec![0, 1], 2), (vec![0, 0, 1, 1], 4), (vec![0, 1, 2], 4), (vec![0, 0], 3)] {
            let blocks = ordered_tuples(order, 1);
            let (w, p) = placement_plan(&pattern, &blocks, order, 1);
            assert_eq!(p.len(), w.len() * pattern.len());
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{pattern:?}");
        }
        // (a,a,b,b) into four slots: choose the two positions of a
        let (w, _) = placement_plan(&[0, 0, 1, 1], &ordered_tuples(4, 1), 4, 1);
        assert_eq!(w.len(), 6);
    }
}
