use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no interior maximum found: {0}")]
    Bracket(String),

    #[error("numerical procedure did not converge: {0}")]
    Convergence(String),

    /// The two empirical quantiles are (nearly) equal or out of order, so the
    /// two-threshold inversion has no positive scale solution.
    #[error("degenerate quantiles: alpha1={alpha1}, alpha2={alpha2}")]
    DegenerateQuantiles { alpha1: f64, alpha2: f64 },

    #[error("asymptotic formula diverges: density term {density:e} at standardized threshold {z}")]
    Divergence { z: f64, density: f64 },

    #[error("Hellinger bound violated at theta={theta}, epsilon={epsilon}: ratio {ratio} > bound {bound}")]
    BoundViolation {
        theta: f64,
        epsilon: f64,
        ratio: f64,
        bound: f64,
    },

    #[error("trial failure rate {rate} exceeds limit at n={n}, mu={mu}")]
    ExcessiveFailures { n: usize, mu: f64, rate: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Bracket(_)
                | Error::Convergence(_)
                | Error::DegenerateQuantiles { .. }
                | Error::Divergence { .. }
                | Error::BoundViolation { .. }
                | Error::ExcessiveFailures { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
