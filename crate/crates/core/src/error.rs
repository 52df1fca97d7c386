use thiserror::Error;

/// Errors raised by the numerical routines and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("duplicate sample points {i} and {j} (|x_i - x_j| = {gap:.3e})")]
    DuplicatePoints { i: usize, j: usize, gap: f64 },

    #[error("target violates the label model: |eta*(x)| = {value} > 1 at point {index}")]
    ModelViolation { index: usize, value: f64 },

    #[error("svm did not converge after {iterations} sweeps (kkt residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("explicit features need {needed} entries, budget is {budget}; use the wishart residual mode")]
    Budget { needed: u128, budget: u128 },

    #[error("svp conditions disagree at point {index}: sign margin {sign_margin:e}, loo margin {loo_margin:e}")]
    InvariantViolation {
        index: usize,
        sign_margin: f64,
        loo_margin: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn in_trial(self, trial: u64) -> Self {
        match self {
            e @ Error::Trial { .. } => e,
            e => Error::Trial {
                trial,
                source: Box::new(e),
            },
        }
    }
}
