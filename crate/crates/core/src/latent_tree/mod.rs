//! Gaussian latent tree models: trees, quartet classification, the
//! polynomial constraints cutting out the model, covariance
//! parametrization and sampling.

mod constraints;
mod model;
mod tree;

pub use constraints::{
    enumerate_constraints, format_sigma_poly, ConstraintMode, ConstraintSet, ConstraintTag, TreeConstraint,
};
pub use model::{
    cholesky, local_alternative, sample_mvn, setup_covariance, tree_covariance, Setup, TreeParams,
};
pub use tree::{NodeId, QuartetClass, Split, Tree};
