//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function or parameter space.
    #[error("domain error: {0}")]
    Domain(String),

    /// Clayton with negative dependence evaluated outside `u^-a + v^-a - 1 > 0`.
    #[error("Clayton support violated at u={u}, v={v}, alpha={alpha}")]
    IndicatorViolation { u: f64, v: f64, alpha: f64 },

    /// An error raised while evaluating observation `t` (1-based).
    #[error("at observation t={t}: {source}")]
    AtObservation {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("root finding did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("Hessian could not be regularized (ridge reached {ridge:e})")]
    SingularHessian { ridge: f64 },

    #[error("Newton-Raphson did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("no change point in {tau_min}..={tau_max} produced a converged fit")]
    AllProfilesFailed { tau_min: usize, tau_max: usize },

    #[error("{failures} of {total} replications failed (limit {limit})")]
    TooManyFailures {
        failures: usize,
        total: usize,
        limit: usize,
    },

    #[error("every candidate model failed to fit")]
    AllCandidatesFailed,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at(self, t: usize) -> Self {
        match self {
            e @ Error::AtObservation { .. } => e,
            e => Error::AtObservation {
                t,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
