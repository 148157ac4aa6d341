use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("point outside the domain ball: {what} norm {norm} exceeds radius {radius}")]
    OutsideDomain { what: &'static str, norm: f64, radius: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state escaped the state ball at step {step}: norm {norm} > {radius}")]
    DomainViolation { step: usize, norm: f64, radius: f64 },

    #[error("measure component {sign:+} has zero mass")]
    EmptyComponent { sign: i8 },

    #[error("network is not a member of the bounded-parameter family: {0}")]
    NotInFamily(String),

    #[error("cover index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("map is not contracting: {0}")]
    NotContracting(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("search too large: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
