use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown site id `{0}`")]
    UnknownSite(String),

    #[error("duplicate site id `{0}`")]
    DuplicateSite(String),

    #[error("network needs at least {needed} sites, got {got}")]
    TooFewSites { needed: usize, got: usize },

    #[error("invalid coordinate for site `{site}`: lat {lat}, lon {lon}")]
    InvalidCoordinate { site: String, lat: f64, lon: f64 },

    #[error("span of {span_secs} s is not a multiple of the {step_secs} s step")]
    UnevenSpan { span_secs: i64, step_secs: i64 },

    #[error("series length {len} is not divisible by factor {factor} (remainder {remainder})")]
    NotDivisible {
        len: usize,
        factor: usize,
        remainder: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular frequency: spectral density is unbounded at omega = 0 when beta > 0")]
    SingularFrequency,

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("spectral factorization failed at frequency index {index}: pivot {pivot} = {value:e}")]
    SpectralFactorization {
        index: usize,
        pivot: usize,
        value: f64,
    },

    #[error("scaling process is undefined for infinite degrees of freedom; use the Gaussian path")]
    InfiniteScaling,

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("degenerate marginal probability p_D = {0}")]
    DegenerateMarginal(f64),

    #[error("perfect separation at site {site}: {pattern}")]
    Separation { site: usize, pattern: String },

    #[error("logistic regression did not converge after {iterations} iterations (log-likelihood trace tail: {trace:?})")]
    NoConvergence { iterations: usize, trace: Vec<f64> },

    #[error("every candidate harmonic order failed to fit")]
    AllFitsFailed,

    #[error("every replication had zero available comparison terms")]
    DegenerateCriterion,

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
