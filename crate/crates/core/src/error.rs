use thiserror::Error;

/// Failures raised by the geometry, coupling, curvature and spectral routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("points are at or beyond the cut locus (distance {distance}, limit {limit})")]
    CutLocus { distance: f64, limit: f64 },

    #[error("matrix is not diagonalizable within tolerance (residual {residual:e})")]
    NotDiagonalizable { residual: f64 },

    #[error("matrix has a negative eigenvalue {eigenvalue:e}")]
    NegativeSpectrum { eigenvalue: f64 },

    #[error("matrix has a non-positive eigenvalue {eigenvalue:e}")]
    NonPositiveSpectrum { eigenvalue: f64 },

    #[error("diffusion tensor is rank deficient (smallest eigenvalue {eigenvalue:e})")]
    SingularDiffusion { eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("condition (H) violated: residual {residual:e} exceeds {tolerance:e}")]
    HViolation { residual: f64, tolerance: f64 },

    #[error("curvature is not positive on the grid (minimum {minimum:e})")]
    NonPositiveCurvature { minimum: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("zero eigenvalue is not simple (next eigenvalue {next:e})")]
    DegenerateSpectrum { next: f64 },

    #[error("bound requires dimension at least 2")]
    DimensionOne,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
