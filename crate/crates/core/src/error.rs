use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its mathematical domain (negative width,
    /// non-finite value, non-positive mean photon number, ...).
    #[error("{0}")]
    ParameterDomain(String),

    #[error("photon number {n} outside 1..={n_max}")]
    Range { n: usize, n_max: usize },

    /// A root or extremum search could not bracket its target.
    #[error("numerical failure in {what} (bracket [{lo}, {hi}])")]
    NumericalFailure { what: &'static str, lo: f64, hi: f64 },

    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::ParameterDomain(msg.into())
    }

    /// True for errors that come from a numerical procedure rather than from
    /// invalid user input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalFailure { .. })
    }
}
