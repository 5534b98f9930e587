use crate::monotone::MonotonicityReport;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("structural hypothesis failed: Hessian not positive definite at unit vector {unit:?}")]
    NotElliptic { unit: Vec<f64> },

    #[error("input error: {0}")]
    Input(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("inconsistency detected: {0}")]
    Inconsistency(String),

    #[error("generator rejected: map failed monotonicity verification ({report})")]
    GeneratorRejected { report: MonotonicityReport },

    #[error("control failure: {0}")]
    ControlFailure(String),

    #[error("probe invalid: {0}")]
    ProbeInvalid(String),

    #[error("unsupported dimension {0} (fundamental solution requires n >= 3)")]
    UnsupportedDimension(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(slice: &[f64], what: &'static str) -> Result<()> {
    if slice.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
