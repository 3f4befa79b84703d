use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid leg selection: {0}")]
    InvalidLegs(String),

    #[error("matrix is not Hermitian (relative defect {0:e})")]
    NotHermitian(f64),

    #[error("not a valid state: {0}")]
    InvalidState(String),

    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("Bloch vector is not unit norm (|v| = {0})")]
    NotUnitVector(f64),

    #[error("filter shape mismatch: {0}")]
    FilterShape(String),

    #[error("Kraus operator does not factor across parties (residual {0:e})")]
    NonProductKraus(f64),

    #[error("no sign change: {0}")]
    NoCrossing(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(name: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    // Closed interval with a little slack for values produced by arithmetic.
    let slack = 1e-12 * (1.0 + min.abs().max(max.abs()));
    if value.is_finite() && value >= min - slack && value <= max + slack {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            min,
            max,
        })
    }
}
