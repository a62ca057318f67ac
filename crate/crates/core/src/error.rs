use thiserror::Error;

/// Errors produced by the testing pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent user input (files, dimensions, flags).
    #[error("invalid input: {0}")]
    Input(String),

    /// A parameter outside its supported range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A studentizing variance is exactly zero, so the coordinate cannot enter the max statistic.
    #[error("degenerate constraint coordinate `{label}`: empirical variance is zero")]
    DegenerateCoordinate { label: String },

    /// Cholesky factorization failed.
    #[error("matrix is not positive definite (smallest pivot {min_pivot:e})")]
    NotPositiveDefinite { min_pivot: f64 },

    /// A tree file or tree construction failed validation.
    #[error("invalid tree: {0}")]
    Tree(String),

    /// A structural invariant that should hold by construction was violated.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    /// Too many simulation replicates failed.
    #[error("{failed} of {total} replicates failed (first error: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
