use thiserror::Error;

use crate::dynamics::JacobianMode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("{0:?} Jacobians are not available for this plant")]
    JacobianUnavailable(JacobianMode),

    #[error("stage Hessian is not positive definite at step {t}")]
    NotPositiveDefinite { t: usize },

    #[error("KKT matrix is singular")]
    SingularKkt,

    #[error("rollout diverged at step {t} (state norm {norm:e})")]
    Divergence { t: usize, norm: f64 },

    #[error("data batch at step {t} is ill-conditioned (kappa = {kappa:e})")]
    IllConditioned { t: usize, kappa: f64 },

    #[error("Riccati iteration did not converge after {0} iterations")]
    DareNoConvergence(usize),

    #[error("iteration {k}: {source}")]
    AtIteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iteration(self, k: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                k,
                source: Box::new(e),
            },
        }
    }

    /// Strips any iteration wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            e => e,
        }
    }
}
