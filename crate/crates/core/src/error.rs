//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the support of the model (e.g. y = 2 for a
    /// Bernoulli outcome).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear predictor or intermediate quantity became nonfinite.
    #[error("overflow error: {0}")]
    Overflow(String),

    /// A quadrature or kernel sum produced a nonfinite or underflowed value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The data cannot support the requested computation (zero variance,
    /// kernel weights underflowing at a query point, too few rows).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A Jacobian or Hessian is singular or indefinite where it must not be;
    /// typically the instrument is too weak to identify the coefficients.
    #[error("identifiability error: {0}")]
    Identifiability(String),

    /// An iterative solver stopped without meeting its tolerance. The last
    /// iterate is carried for diagnostics.
    #[error("convergence error: {message} (last iterate {last_iterate:?})")]
    Convergence {
        message: String,
        last_iterate: Vec<f64>,
    },

    /// The discrepancy covariance has an eigenvalue below the relative cutoff,
    /// so the test statistic direction is not identified.
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    /// Bisection for the missingness intercept failed to bracket the target.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Too many Monte Carlo replications failed.
    #[error("harness error: {0}")]
    Harness(String),

    /// A vector or matrix has the wrong dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// A CSV cell failed to parse.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// The declared column roles are inconsistent with the file contents.
    #[error("schema error: {0}")]
    Schema(String),

    /// Invalid command-line usage.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for the structured JSON error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Overflow(_) => "overflow",
            Error::Numeric(_) => "numeric",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Identifiability(_) => "identifiability",
            Error::Convergence { .. } => "convergence",
            Error::DegenerateCovariance(_) => "degenerate_covariance",
            Error::Calibration(_) => "calibration",
            Error::Harness(_) => "harness",
            Error::Shape(_) => "shape",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code for the CLI: 1 for usage problems, 2 for everything
    /// that went wrong during estimation or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            _ => 2,
        }
    }
}
