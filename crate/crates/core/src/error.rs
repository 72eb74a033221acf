use thiserror::Error;

/// Errors raised by the numerical toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree overflow: degree {degree} exceeds dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },

    #[error("unsupported dimension {0} (allowed 2..=8)")]
    UnsupportedDimension(usize),

    #[error("operation `{0}` needs a form of positive degree")]
    ZeroDegree(&'static str),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("matrix is not a complex structure (|J^2 + I| = {0:.3e})")]
    NotComplexStructure(f64),

    #[error("metric is singular or not positive definite")]
    SingularMetric,

    #[error("linear map is singular")]
    SingularMap,

    #[error("division by the zero form")]
    ZeroDenominator,

    #[error("point outside chart domain: {0}")]
    OutsideChart(String),

    #[error("finite-difference step too large: estimates at h and h/2 differ by {0:.3e}")]
    StepTooLarge(f64),

    #[error("aliasing: top third of the spectrum carries {0:.3e} of the energy")]
    Aliasing(f64),

    #[error("source has nonzero mean {0:.3e}; the equation is not solvable")]
    NonzeroMean(f64),

    #[error("target density is not positive (minimum {0:.3e})")]
    NonPositiveDensity(f64),

    #[error("compatibility integral violated: relative defect {0:.3e}")]
    Compatibility(f64),

    #[error("background form is not positive (margin {0:.3e})")]
    NonPositiveBackground(f64),

    #[error("function is not basic: drift {0:.3e} along the canonical foliation")]
    NotBasic(f64),

    #[error("reconstructed metric is not positive definite (min eigenvalue {0:.3e})")]
    IndefiniteMetric(f64),

    #[error("linear solver did not converge: relative residual {0:.3e}")]
    LinearSolver(f64),

    #[error("solver did not converge: residual {residual:.3e} after {iterations} steps")]
    NotConverged { residual: f64, iterations: usize },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
