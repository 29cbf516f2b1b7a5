use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid disease pattern (d1, d2) = ({d1}, {d2})")]
    InvalidDiseasePattern { d1: u8, d2: u8 },

    #[error("disease class {0} is outside 1..=3")]
    InvalidClass(u8),

    #[error("verification flag and disease label disagree (v = {v}, label present = {has_label})")]
    VerifiedLabelMismatch { v: u8, has_label: bool },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dataset needs at least {min} records, got {found}")]
    TooFewRecords { min: usize, found: usize },

    #[error("column {0} has zero variance")]
    ZeroVariance(String),

    #[error("no subject in class {0}")]
    EmptyClass(u8),

    #[error("conditional class probabilities are degenerate (denominator underflow)")]
    DegenerateConditional,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimizer did not converge: best gradient norm {grad_norm:e} after {iterations} iterations")]
    NonConvergence { grad_norm: f64, iterations: usize },

    #[error("model is not identifiable at the optimum: information condition number {condition:e}")]
    NonIdentifiable { condition: f64 },

    #[error("observed information is singular")]
    SingularInformation,

    #[error("verified subject {index} has verification probability {pi:e} below the positivity floor")]
    ExtremeWeight { index: usize, pi: f64 },

    #[error("estimator denominator is not positive ({0:e})")]
    DenominatorUnderflow(f64),

    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("{failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// Numerical failures (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonIdentifiable { .. }
                | Error::SingularInformation
                | Error::ExtremeWeight { .. }
                | Error::DenominatorUnderflow(_)
                | Error::DegenerateConditional
                | Error::TooManyFailures { .. }
        )
    }
}
