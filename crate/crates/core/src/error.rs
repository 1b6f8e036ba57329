use thiserror::Error;

/// Errors raised by model handling and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse model document: {0}")]
    Parse(String),

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("horizon {horizon} exceeds the schedule length of `{field}`")]
    HorizonExceedsSchedule { field: &'static str, horizon: usize },

    #[error("innovation covariance is singular at k={k}")]
    SingularInnovation { k: usize },

    #[error("rejection sampler gave up after {attempts} attempts")]
    RejectionExhausted { attempts: u64 },

    #[error("scale posterior is improper (zero prior variance and zero measurement)")]
    ImproperScalePosterior,

    #[error("ensemble member {member} failed: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all particle weights vanished at k={k}")]
    DegenerateWeights { k: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{failed} of {total} trials failed for estimator `{estimator}`")]
    TooManyFailures {
        estimator: String,
        failed: usize,
        total: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation { .. }
                | Error::HorizonExceedsSchedule { .. }
                | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
