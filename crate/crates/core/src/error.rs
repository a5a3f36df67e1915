use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The exponents violate `0 < (p-1)/r < q/(s+1)`.
    #[error("admissibility violated: {0}")]
    AdmissibilityViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Reaction growth over the proposed step exceeds the cap; retry with a smaller step.
    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("numerical breakdown at t = {t}: {reason}")]
    NumericalBreakdown { t: f64, reason: String },

    #[error("no admissible (beta, k) pair: {0}")]
    InfeasibleSelection(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
