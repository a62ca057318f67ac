use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tree::{classify_with, QuartetClass, Tree};
use crate::error::{Error, Result};
use crate::kernel::{vech_index, vech_len, Constraint, ConstraintKind, CovarianceEstimators, PolynomialSpec, SymmetricKernel};

/// Which constraints of the tree model to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintMode {
    EqualitiesOnly,
    All,
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq" | "equalities" | "equalities_only" => Ok(Self::EqualitiesOnly),
            "all" => Ok(Self::All),
            other => Err(Error::Input(format!("unknown constraint mode `{other}` (expected eq or all)"))),
        }
    }
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EqualitiesOnly => "eq",
            Self::All => "all",
        })
    }
}

/// Family a tree constraint belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintTag {
    /// `-σ_uv σ_uw σ_vw ≤ 0` on a leaf triple.
    IneqA,
    /// `σ²_uv σ²_vw - σ²_vv σ²_uw ≤ 0` and its two rotations.
    IneqB,
    /// `σ²_uw σ²_vz - σ²_uv σ²_wz ≤ 0` for a split `{u,v}|{w,z}`.
    IneqC,
    /// The tetrad that vanishes for a split quartet.
    TetradQ,
    /// The two tetrads of a quartet whose paths all meet in one node.
    TetradNotQ,
}

impl ConstraintTag {
    pub const ALL: [ConstraintTag; 5] = [Self::IneqA, Self::IneqB, Self::IneqC, Self::TetradQ, Self::TetradNotQ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::IneqA => "ineq_a",
            Self::IneqB => "ineq_b",
            Self::IneqC => "ineq_c",
            Self::TetradQ => "tetrad_Q",
            Self::TetradNotQ => "tetrad_notQ",
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        match self {
            Self::IneqA | Self::IneqB | Self::IneqC => ConstraintKind::Inequality,
            Self::TetradQ | Self::TetradNotQ => ConstraintKind::Equality,
        }
    }
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A generated constraint with the leaves (by index) it involves.
#[derive(Clone, Debug)]
pub struct TreeConstraint {
    pub constraint: Constraint,
    pub tag: ConstraintTag,
    pub leaves: Vec<usize>,
}

/// All constraints of a tree model over `θ = vech(Σ)`.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    l: usize,
    mode: ConstraintMode,
    constraints: Vec<TreeConstraint>,
}

impl ConstraintSet {
    pub fn leaf_count(&self) -> usize {
        self.l
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TreeConstraint> {
        self.constraints.iter()
    }

    /// Coordinates entering the max statistic (equalities count twice).
    pub fn p_effective(&self) -> usize {
        self.constraints
            .iter()
            .map(|c| match c.constraint.kind {
                ConstraintKind::Equality => 2,
                ConstraintKind::Inequality => 1,
            })
            .sum()
    }

    pub fn count(&self, tag: ConstraintTag) -> usize {
        self.constraints.iter().filter(|c| c.tag == tag).count()
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        self.constraints.iter().map(|c| c.constraint.clone()).collect()
    }

    /// Symmetric kernel over covariance-entry estimators.
    pub fn kernel(&self) -> Result<SymmetricKernel> {
        SymmetricKernel::from_constraints(&self.constraints(), Arc::new(CovarianceEstimators::new(self.l)))
    }
}

struct Builder<'a> {
    tree: &'a Tree,
    l: usize,
    out: Vec<TreeConstraint>,
}

impl Builder<'_> {
    fn s(&self, u: usize, v: usize) -> usize {
        vech_index(self.l, u, v)
    }

    fn names(&self, leaves: &[usize]) -> String {
        leaves.iter().map(|&i| self.tree.leaf_name(i)).collect::<Vec<_>>().join(",")
    }

    fn push(&mut self, tag: ConstraintTag, label: String, leaves: Vec<usize>, terms: Vec<(f64, Vec<usize>)>) -> Result<()> {
        let poly = PolynomialSpec::new(0.0, terms, vech_len(self.l))?;
        self.out.push(TreeConstraint {
            constraint: Constraint {
                label,
                kind: tag.kind(),
                poly,
            },
            tag,
            leaves,
        });
        Ok(())
    }

    fn triple(&mut self, u: usize, v: usize, w: usize) -> Result<()> {
        let leaves = vec![u, v, w];
        let names = self.names(&leaves);
        let (uv, uw, vw) = (self.s(u, v), self.s(u, w), self.s(v, w));
        let (uu, vv, ww) = (self.s(u, u), self.s(v, v), self.s(w, w));
        self.push(
            ConstraintTag::IneqA,
            format!("ineq_a[{names}]"),
            leaves.clone(),
            vec![(-1.0, vec![uv, uw, vw])],
        )?;
        let rotations = [
            // σ²_uv σ²_vw − σ²_vv σ²_uw
            (uv, vw, vv, uw),
            // σ²_uw σ²_vw − σ²_ww σ²_uv
            (uw, vw, ww, uv),
            // σ²_uv σ²_uw − σ²_uu σ²_vw
            (uv, uw, uu, vw),
        ];
        for (k, (a, b, c, d)) in rotations.into_iter().enumerate() {
            self.push(
                ConstraintTag::IneqB,
                format!("ineq_b[{names}].{}", k + 1),
                leaves.clone(),
                vec![(1.0, vec![a, a, b, b]), (-1.0, vec![c, c, d, d])],
            )?;
        }
        Ok(())
    }

    fn quadruple(&mut self, class: QuartetClass, quad: [usize; 4], mode: ConstraintMode) -> Result<()> {
        match class {
            QuartetClass::InQ(split) => {
                let ([u, v], [w, z]) = (split.left, split.right);
                let leaves = vec![u, v, w, z];
                let label = format!(
                    "[{},{}|{},{}]",
                    self.tree.leaf_name(u),
                    self.tree.leaf_name(v),
                    self.tree.leaf_name(w),
                    self.tree.leaf_name(z)
                );
                let (uw, vz, uz, vw, uv, wz) =
                    (self.s(u, w), self.s(v, z), self.s(u, z), self.s(v, w), self.s(u, v), self.s(w, z));
                if mode == ConstraintMode::All {
                    self.push(
                        ConstraintTag::IneqC,
                        format!("ineq_c{label}"),
                        leaves.clone(),
                        vec![(1.0, vec![uw, uw, vz, vz]), (-1.0, vec![uv, uv, wz, wz])],
                    )?;
                }
                self.push(
                    ConstraintTag::TetradQ,
                    format!("tetrad_Q{label}"),
                    leaves,
                    vec![(1.0, vec![uw, vz]), (-1.0, vec![uz, vw])],
                )?;
            }
            QuartetClass::AllEmpty => {
                let [u, v, w, z] = quad;
                let leaves = quad.to_vec();
                let names = self.names(&leaves);
                let (uz, vw, uw, vz, uv, wz) =
                    (self.s(u, z), self.s(v, w), self.s(u, w), self.s(v, z), self.s(u, v), self.s(w, z));
                self.push(
                    ConstraintTag::TetradNotQ,
                    format!("tetrad_notQ[{names}].1"),
                    leaves.clone(),
                    vec![(1.0, vec![uz, vw]), (-1.0, vec![uw, vz])],
                )?;
                self.push(
                    ConstraintTag::TetradNotQ,
                    format!("tetrad_notQ[{names}].2"),
                    leaves,
                    vec![(1.0, vec![uv, wz]), (-1.0, vec![uw, vz])],
                )?;
            }
        }
        Ok(())
    }
}

/// Generates the polynomial constraints describing the covariance matrices of
/// the latent tree model on `tree`: inequalities on every leaf triple,
/// and per quadruple either a tetrad plus an inequality (split quartets) or
/// two tetrads. `EqualitiesOnly` keeps just the tetrads.
pub fn enumerate_constraints(tree: &Tree, mode: ConstraintMode) -> Result<ConstraintSet> {
    let l = tree.leaf_count();
    if l < 4 {
        return Err(Error::Input(format!("constraint enumeration needs at least 4 leaves, got {l}")));
    }
    let mut b = Builder {
        tree,
        l,
        out: Vec::new(),
    };
    if mode == ConstraintMode::All {
        for u in 0..l {
            for v in u + 1..l {
                for w in v + 1..l {
                    b.triple(u, v, w)?;
                }
            }
        }
    }
    let paths = tree.leaf_path_bitsets();
    for u in 0..l {
        for v in u + 1..l {
            for w in v + 1..l {
                for z in w + 1..l {
                    let quad = [u, v, w, z];
                    let class = classify_with(&paths, quad)?;
                    b.quadruple(class, quad, mode)?;
                }
            }
        }
    }
    Ok(ConstraintSet {
        l,
        mode,
        constraints: b.out,
    })
}

/// Renders a polynomial over `vech(Σ)` with `s(u,v)` symbols named by leaf.
pub fn format_sigma_poly(poly: &PolynomialSpec, tree: &Tree) -> String {
    let l = tree.leaf_count();
    let mut out = String::new();
    for (k, term) in poly.terms().iter().enumerate() {
        let sign = if term.coef < 0.0 { '-' } else { '+' };
        if k == 0 {
            if sign == '-' {
                out.push('-');
            }
        } else {
            out.push(' ');
            out.push(sign);
            out.push(' ');
        }
        if term.coef.abs() != 1.0 {
            out.push_str(&format!("{}*", term.coef.abs()));
        }
        let mut factors: Vec<String> = Vec::new();
        let mut i = 0;
        while i < term.indices.len() {
            let idx = term.indices[i];
            let mut run = 1;
            while i + run < term.indices.len() && term.indices[i + run] == idx {
                run += 1;
            }
            let (r, c) = crate::kernel::vech_pair(l, idx);
            let sym = format!("s({},{})", tree.leaf_name(c), tree.leaf_name(r));
            factors.push(if run > 1 { format!("{sym}^{run}") } else { sym });
            i += run;
        }
        out.push_str(&factors.join("*"));
    }
    if poly.constant() != 0.0 || out.is_empty() {
        out.push_str(&format!(" + {}", poly.constant()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        crate::ustat::binomial_coefficient(n, k) as usize
    }

    #[test]
    fn star_counts() {
        let t = Tree::star(15).unwrap();
        let all = enumerate_constraints(&t, ConstraintMode::All).unwrap();
        assert_eq!(all.len(), 4550);
        assert_eq!(all.count(ConstraintTag::IneqC), 0);
        let eq = enumerate_constraints(&t, ConstraintMode::EqualitiesOnly).unwrap();
        assert_eq!(eq.len(), 2730);
        assert_eq!(eq.p_effective(), 5460);
    }

    #[test]
    fn quartet_counts() {
        let t = Tree::parse("a 1\na 2\na b\nb 3\nb 4\n").unwrap();
        let all = enumerate_constraints(&t, ConstraintMode::All).unwrap();
        assert_eq!(all.len(), 2 * binom(4, 4) + 4 * binom(4, 3));
        assert_eq!(all.len(), 18);
        assert_eq!(all.count(ConstraintTag::TetradQ), 1);
        assert_eq!(all.count(ConstraintTag::IneqC), 1);
        assert_eq!(all.count(ConstraintTag::TetradNotQ), 0);
    }

    #[test]
    fn degrees_in_range() {
        let t = Tree::caterpillar(7).unwrap();
        let all = enumerate_constraints(&t, ConstraintMode::All).unwrap();
        for c in all.iter() {
            let d = c.constraint.poly.total_degree();
            assert!((2..=4).contains(&d), "{} has degree {d}", c.constraint.label);
        }
        assert!(enumerate_constraints(&Tree::star(3).unwrap(), ConstraintMode::All).is_err());
    }

    #[test]
    fn sigma_formatting() {
        let t = Tree::parse("a 1\na 2\na b\nb 3\nb 4\n").unwrap();
        let eq = enumerate_constraints(&t, ConstraintMode::EqualitiesOnly).unwrap();
        let c = eq.iter().next().unwrap();
        let s = format_sigma_poly(&c.constraint.poly, &t);
        assert!(s.contains("s(1,3)*s(2,4)"), "{s}");
        assert!(s.contains(" - s(1,4)*s(2,3)"), "{s}");
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("eq".parse::<ConstraintMode>().unwrap(), ConstraintMode::EqualitiesOnly);
        assert_eq!("all".parse::<ConstraintMode>().unwrap(), ConstraintMode::All);
        assert!("some".parse::<ConstraintMode>().is_err());
    }
}
