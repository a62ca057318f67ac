//! Testing polynomial constraints on covariance matrices with incomplete
//! U-statistics and a multiplier bootstrap.
//!
//! The main entry point is [`run_test`]: build a [`SymmetricKernel`] from a
//! list of [`Constraint`]s, choose a computational budget with
//! [`BudgetConfig`] and a [`BootstrapConfig`], and get back a [`TestReport`].
//! [`latent_tree`] enumerates the constraints of a Gaussian latent tree model
//! and [`simulate`] runs Monte Carlo studies on top of it.

pub mod bootstrap;
pub mod constraint_file;
pub mod data;
pub mod error;
pub mod kernel;
pub mod latent_tree;
pub mod rng;
pub mod simulate;
pub mod ustat;

pub use bootstrap::{run_test, run_test_n1, BootstrapConfig, ConstraintSummary, TestReport};
pub use error::{Error, Result};
pub use kernel::{Constraint, ConstraintKind, PolynomialSpec, SymmetricKernel};
pub use latent_tree::{enumerate_constraints, ConstraintMode, ConstraintSet, Setup, Tree};
pub use ustat::{BudgetConfig, TupleSample};
