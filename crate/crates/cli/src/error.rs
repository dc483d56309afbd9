use ricci_core::Error;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or inputs (exit 2).
    Validation(String),
    /// A module error raised while computing (exit 3).
    Numerical(Error),
    /// Reading inputs or writing reports failed (exit 1).
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numerical(e)
    }
}

impl CliError {
    /// Module errors met while parsing inputs count as validation errors.
    pub fn invalid(e: Error) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// Short machine-readable reason.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Numerical(e) => match e {
                Error::CutLocus { .. } => "cut_locus",
                Error::NotDiagonalizable { .. } => "not_diagonalizable",
                Error::NegativeSpectrum { .. } => "negative_spectrum",
                Error::NonPositiveSpectrum { .. } => "non_positive_spectrum",
                Error::SingularDiffusion { .. } => "singular_diffusion",
                Error::DimensionMismatch(_) => "dimension_mismatch",
                Error::HViolation { .. } => "h_violation",
                Error::NonPositiveCurvature { .. } => "non_positive_curvature",
                Error::GridTooCoarse(_) => "grid_too_coarse",
                Error::DegenerateSpectrum { .. } => "degenerate_spectrum",
                Error::DimensionOne => "dimension_one",
                Error::InvalidInput(_) => "invalid_input",
            },
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m.clone(),
            CliError::Numerical(e) => e.to_string(),
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.message() }).to_string()
    }
}
