use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::tree::Tree;
use crate::error::{Error, Result};

/// Leaf variances and edge correlations of a Gaussian latent tree model.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    /// Indexed by leaf position.
    pub omega: Vec<f64>,
    /// Indexed by edge id.
    pub rho: Vec<f64>,
}

impl TreeParams {
    fn validate(&self, tree: &Tree) -> Result<()> {
        if self.omega.len() != tree.leaf_count() || self.rho.len() != tree.edge_count() {
            return Err(Error::Input(format!(
                "parameters sized for {} leaves / {} edges but the tree has {} / {}",
                self.omega.len(),
                self.rho.len(),
                tree.leaf_count(),
                tree.edge_count()
            )));
        }
        if let Some(w) = self.omega.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Input(format!("leaf variance {w} is not positive")));
        }
        if let Some(r) = self.rho.iter().find(|&&r| !(r != 0.0 && r.abs() < 1.0)) {
            return Err(Error::Input(format!("edge correlation {r} is outside 0 < |ρ| < 1")));
        }
        Ok(())
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(sigma: &Array2<f64>) -> Result<Array2<f64>> {
    let l = sigma.nrows();
    if sigma.ncols() != l {
        return Err(Error::Input("covariance matrix must be square".into()));
    }
    let mut factor = Array2::<f64>::zeros((l, l));
    let mut min_pivot = f64::INFINITY;
    for j in 0..l {
        let mut d = sigma[[j, j]];
        for k in 0..j {
            d -= factor[[j, k]] * factor[[j, k]];
        }
        min_pivot = min_pivot.min(d);
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { min_pivot: d });
        }
        let djj = d.sqrt();
        factor[[j, j]] = djj;
        for i in j + 1..l {
            let mut s = sigma[[i, j]];
            for k in 0..j {
                s -= factor[[i, k]] * factor[[j, k]];
            }
            factor[[i, j]] = s / djj;
        }
    }
    Ok(factor)
}

// One retry with a small diagonal jitter for near-singular matrices.
fn factor_with_jitter(sigma: Array2<f64>) -> Result<Array2<f64>> {
    match cholesky(&sigma) {
        Ok(_) => Ok(sigma),
        Err(Error::NotPositiveDefinite { .. }) => {
            let l = sigma.nrows();
            let jitter = 1e-10 * sigma.diag().sum() / l as f64;
            let mut jittered = sigma;
            jittered.diag_mut().mapv_inplace(|d| d + jitter);
            cholesky(&jittered)?;
            Ok(jittered)
        }
        Err(e) => Err(e),
    }
}

/// `σ_vv = ω_v`, `σ_uv = √(ω_u ω_v) · Π_{e ∈ path(u,v)} ρ_e`.
pub fn tree_covariance(tree: &Tree, params: &TreeParams) -> Result<Array2<f64>> {
    params.validate(tree)?;
    let l = tree.leaf_count();
    let mut sigma = Array2::<f64>::zeros((l, l));
    for u in 0..l {
        sigma[[u, u]] = params.omega[u];
        for v in u + 1..l {
            let path: f64 = tree
                .path_edges(tree.leaves()[u], tree.leaves()[v])
                .into_iter()
                .map(|e| params.rho[e])
                .product();
            let s = (params.omega[u] * params.omega[v]).sqrt() * path;
            sigma[[u, v]] = s;
            sigma[[v, u]] = s;
        }
    }
    cholesky(&sigma)?;
    Ok(sigma)
}

/// The three simulation designs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Setup {
    /// Star tree, every `ρ_e = √0.5`, every `ω = 2`.
    A,
    /// Star tree near a singular point: strong edges to leaves 1 and 2, small random others.
    B,
    /// Caterpillar with strong edges except around four evenly spaced inner nodes.
    C,
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            other => Err(Error::Input(format!("unknown setup `{other}` (expected a, b or c)"))),
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
        })
    }
}

const STRONG_EDGE: f64 = 0.998;
const WEAK_EDGE_SD: f64 = 0.1;

fn weak_edge<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let normal = Normal::new(0.0, WEAK_EDGE_SD).expect("valid normal");
    loop {
        let r: f64 = normal.sample(rng);
        if r != 0.0 && r.abs() < 1.0 {
            return r;
        }
    }
}

impl Setup {
    pub fn tree(&self, l: usize) -> Result<Tree> {
        match self {
            Self::A | Self::B => Tree::star(l),
            Self::C => Tree::caterpillar(l),
        }
    }

    /// Parameters for `tree` (which must come from [`Setup::tree`]).
    pub fn params<R: Rng + ?Sized>(&self, tree: &Tree, rng: &mut R) -> TreeParams {
        let l = tree.leaf_count();
        match self {
            Self::A => TreeParams {
                omega: vec![2.0; l],
                rho: vec![0.5f64.sqrt(); tree.edge_count()],
            },
            Self::B => {
                let strong: Vec<usize> = [0, 1]
                    .iter()
                    .flat_map(|&leaf| tree.incident_edges(tree.leaves()[leaf]))
                    .collect();
                let rho = (0..tree.edge_count())
                    .map(|e| if strong.contains(&e) { STRONG_EDGE } else { weak_edge(rng) })
                    .collect();
                let omega = (0..l).map(|i| if i < 2 { 100.0 } else { 1.0 }).collect();
                TreeParams { omega, rho }
            }
            Self::C => {
                let spine = l - 2;
                let mut weak = vec![false; tree.edge_count()];
                for k in 1..=4 {
                    let pos = (spine * k).div_ceil(5).max(1);
                    let node = tree.node(&format!("s{pos}")).expect("caterpillar spine node");
                    for e in tree.incident_edges(node) {
                        weak[e] = true;
                    }
                }
                let rho = weak
                    .into_iter()
                    .map(|w| if w { weak_edge(rng) } else { STRONG_EDGE })
                    .collect();
                TreeParams {
                    omega: vec![2.0; l],
                    rho,
                }
            }
        }
    }
}

/// Tree and model covariance for a simulation setup. Random edge parameters
/// are drawn from `rng`; a near-singular result gets one jittered retry.
pub fn setup_covariance<R: Rng + ?Sized>(setup: Setup, l: usize, rng: &mut R) -> Result<(Tree, Array2<f64>)> {
    if l < 4 {
        return Err(Error::Input(format!("setups need at least 4 leaves, got {l}")));
    }
    let tree = setup.tree(l)?;
    let params = setup.params(&tree, rng);
    let sigma = match tree_covariance(&tree, &params) {
        Ok(s) => s,
        Err(Error::NotPositiveDefinite { .. }) => {
            let mut raw = Array2::<f64>::zeros((l, l));
            for u in 0..l {
                for v in 0..l {
                    raw[[u, v]] = if u == v {
                        params.omega[u]
                    } else {
                        (params.omega[u] * params.omega[v]).sqrt()
                            * tree
                                .path_edges(tree.leaves()[u], tree.leaves()[v])
                                .into_iter()
                                .map(|e| params.rho[e])
                                .product::<f64>()
                    };
                }
            }
            factor_with_jitter(raw)?
        }
        Err(e) => return Err(e),
    };
    Ok((tree, sigma))
}

/// `Σ + γγᵀ·h/√n`; `gamma` defaults to `(0, …, 0, 1, 1)`.
pub fn local_alternative(sigma: &Array2<f64>, shift: f64, n: usize, gamma: Option<&[f64]>) -> Result<Array2<f64>> {
    let l = sigma.nrows();
    let gamma: Array1<f64> = match gamma {
        Some(g) if g.len() != l => {
            return Err(Error::Input(format!("gamma has length {} but Σ is {l} × {l}", g.len())))
        }
        Some(g) => Array1::from(g.to_vec()),
        None => (0..l).map(|i| if i + 2 >= l { 1.0 } else { 0.0 }).collect(),
    };
    if n == 0 {
        return Err(Error::Input("local alternative needs n > 0".into()));
    }
    let scale = shift / (n as f64).sqrt();
    let mut out = sigma.clone();
    for i in 0..l {
        for j in 0..l {
            out[[i, j]] += gamma[i] * gamma[j] * scale;
        }
    }
    cholesky(&out)?;
    Ok(out)
}

/// `n` i.i.d. rows from `N(0, Σ)` as `L·z` with `Σ = L Lᵀ`.
pub fn sample_mvn<R: Rng + ?Sized>(sigma: &Array2<f64>, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    let factor = cholesky(sigma)?;
    let l = sigma.nrows();
    let mut out = Array2::<f64>::zeros((n, l));
    let mut z = vec![0.0; l];
    for mut row in out.rows_mut() {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for i in 0..l {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += factor[[i, k]] * z[k];
            }
            row[i] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn setup_a_values() {
        let mut rng = substream(0, &[]);
        let (_, s) = setup_covariance(Setup::A, 15, &mut rng).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                let want = if i == j { 2.0 } else { 1.0 };
                assert!((s[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn setup_b_values() {
        let mut rng = substream(3, &[]);
        let (_, s) = setup_covariance(Setup::B, 15, &mut rng).unwrap();
        assert!((s[[0, 1]] - 100.0 * 0.998 * 0.998).abs() < 1e-9);
        assert_eq!(s[[0, 0]], 100.0);
        assert_eq!(s[[5, 5]], 1.0);
        for u in 2..15 {
            for v in u + 1..15 {
                assert!(s[[u, v]].abs() < 0.25, "σ_{u}{v} = {}", s[[u, v]]);
            }
        }
    }

    #[test]
    fn setup_c_has_weak_and_strong_edges() {
        let mut rng = substream(4, &[]);
        let tree = Setup::C.tree(15).unwrap();
        let params = Setup::C.params(&tree, &mut rng);
        let strong = params.rho.iter().filter(|&&r| r == STRONG_EDGE).count();
        // four spine nodes of degree 3 touch 12 edge slots; adjacent choices share edges
        assert!(strong > 0 && strong < tree.edge_count());
        let (_, s) = setup_covariance(Setup::C, 15, &mut rng).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_edge_covariance() {
        let t = Tree::from_edges(&[("u", "v")]).unwrap();
        let p = TreeParams {
            omega: vec![100.0, 100.0],
            rho: vec![0.998],
        };
        let s = tree_covariance(&t, &p).unwrap();
        assert!((s[[0, 1]] - 99.8).abs() < 1e-12);
        assert!(tree_covariance(&t, &TreeParams { omega: vec![1.0, 1.0], rho: vec![1.0] }).is_err());
    }

    #[test]
    fn local_alternative_structure() {
        let mut rng = substream(0, &[]);
        let (_, s) = setup_covariance(Setup::A, 6, &mut rng).unwrap();
        assert_eq!(local_alternative(&s, 0.0, 100, None).unwrap(), s);
        let shifted = local_alternative(&s, 10.0, 100, None).unwrap();
        let diff = &shifted - &s;
        for i in 0..6 {
            for j in 0..6 {
                let want = if i >= 4 && j >= 4 { 1.0 } else { 0.0 };
                assert!((diff[[i, j]] - want).abs() < 1e-12);
            }
        }
        let t0 = s.diag().sum();
        let t1 = local_alternative(&s, 3.0, 100, None).unwrap().diag().sum();
        assert!((t1 - t0 - 2.0 * 3.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reports_pivot() {
        let m = ndarray::array![[1.0, 2.0], [2.0, 1.0]];
        match cholesky(&m) {
            Err(Error::NotPositiveDefinite { min_pivot }) => assert!((min_pivot + 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mvn_moments() {
        let mut rng = substream(21, &[]);
        let n = 100_000;
        let eye = Array2::<f64>::eye(3);
        let x = sample_mvn(&eye, n, &mut rng).unwrap();
        let cov = x.t().dot(&x) / n as f64;
        // Var(x_i x_j) is 2 on the diagonal and 1 off it
        for i in 0..3 {
            for j in 0..3 {
                let (want, var) = if i == j { (1.0, 2.0) } else { (0.0, 1.0) };
                let se = (var / n as f64).sqrt();
                assert!((cov[[i, j]] - want).abs() < 4.0 * se, "({i},{j}) {}", cov[[i, j]]);
            }
        }
        let four = ndarray::array![[4.0]];
        let x = sample_mvn(&four, n, &mut rng).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var - 4.0).abs() < 4.0 * (32.0 / n as f64).sqrt());
        assert_eq!(sample_mvn(&eye, 0, &mut rng).unwrap().dim(), (0, 3));
    }
}
