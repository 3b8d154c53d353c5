use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// The state equation has no stable solution: the coefficient left the
    /// domain of definition D(F) of the forward map.
    #[error("forward problem not solvable (pivot ratio {pivot_ratio:e}): coefficient outside D(F)")]
    Solvability { pivot_ratio: f64 },

    #[error("state too close to zero: min |u0| = {min:e} < {threshold:e}")]
    Denominator { min: f64, threshold: f64 },

    #[error("coefficient not positive: min = {min:e}")]
    CoefficientPositivity { min: f64 },

    #[error("shift {lambda} resonates with eigenvalue {eigenvalue} of the shifted operator")]
    Resonance { lambda: f64, eigenvalue: f64 },

    #[error("inadmissible parameter: {0}")]
    Admissibility(String),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
