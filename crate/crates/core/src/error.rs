//! Error type shared by all library modules.

use thiserror::Error;

/// Failures surfaced by the analysis pipeline.
///
/// Construction-time validation problems (shape mismatches, out-of-range
/// knobs) and runtime numerical signals (blow-up, residual overflow) share
/// one enum so callers can match on the failure class.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("non-finite values encountered during propagation")]
    NonFinite,

    #[error("encoding frequency range overflows the index type: {0}")]
    GammaOverflow(String),

    #[error("gamma {gamma} does not decode to an in-scope pathway (order <= {max_order})")]
    InvalidGamma { gamma: u64, max_order: usize },

    #[error(
        "decode residual energy {residual:.3e} exceeds {tolerance:.1e} of total {total:.3e} \
         (truncation order or s-grid too small)"
    )]
    ResidualAboveThreshold {
        residual: f64,
        tolerance: f64,
        total: f64,
    },

    #[error("confidence level must lie strictly in (0, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("covariance matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),

    #[error("gradient imaginary residue {0:.3e} exceeds 1e-8 (convention or propagation bug)")]
    ImaginaryResidue(f64),

    #[error("quadratic form produced {0:.3e}, negative beyond tolerance")]
    NegativeQuadraticForm(f64),

    #[error("population is empty")]
    EmptyPopulation,

    #[error("monte carlo sample {index} failed: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: Box<CoreError>,
    },
}
