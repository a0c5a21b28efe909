use thiserror::Error;

/// Failure modes shared by every module of the crate.
///
/// `Domain` errors are caller mistakes (arguments outside the admissible
/// set); the remaining variants are numerical failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("bracket failure: {0}")]
    Bracket(String),
    #[error("integration horizon exceeded after {steps} steps (last state r = {r:e}, v = {v:e}, v' = {dv:e})")]
    Horizon { steps: usize, r: f64, v: f64, dv: f64 },
    #[error("step size underflow at r = {r:e}: {reason}")]
    StepUnderflow { r: f64, reason: String },
    #[error("precision exhausted: {0}; rerun with paired-double precision")]
    Precision(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("matching error: {0}")]
    Matching(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for caller errors, false for numerical failures.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Bracket(_) => "bracket",
            Error::Horizon { .. } => "horizon",
            Error::StepUnderflow { .. } => "step-underflow",
            Error::Precision(_) => "precision",
            Error::Quadrature(_) => "quadrature",
            Error::Matching(_) => "matching",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
