//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("topology has no access points (radius {radius} m, spacing {ifd} m)")]
    EmptyTopology { radius: f64, ifd: f64 },

    #[error("a requesting user has zero transmission rate (fap {fap}, user {user})")]
    InvalidRate { fap: usize, user: usize },

    #[error("value function diverged at step {slot} (max |v| = {magnitude:.3e}); reduce the step size")]
    NonFiniteValue { slot: usize, magnitude: f64 },

    #[error("transport step would need {needed} sub-steps (limit {limit})")]
    CflViolation { needed: usize, limit: usize },

    #[error("fixed-point iteration did not converge: {unconverged} of {total} files above tol after {iters} iterations")]
    NoConvergence {
        unconverged: usize,
        total: usize,
        iters: usize,
    },

    #[error("policy queried past the solved horizon (slot {slot}, horizon {horizon})")]
    StalePolicy { slot: usize, horizon: usize },

    #[error("simulation state violated an invariant: {0}")]
    InconsistentState(String),

    #[error("run `{run}` failed: {source}")]
    RunContext {
        run: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the run label that produced it.
    pub fn with_run(self, run: impl Into<String>) -> Self {
        Error::RunContext {
            run: run.into(),
            source: Box::new(self),
        }
    }
}
