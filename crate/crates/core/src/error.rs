use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("measure density is undefined at the origin")]
    UndefinedAtOrigin,

    #[error("operation not supported for measure kind `{0}`")]
    UnsupportedKind(&'static str),

    #[error("near-origin integral diverges (local exponent {exponent:.3}, singularity order {beta:.3})")]
    NearOriginDivergence { exponent: f64, beta: f64 },

    #[error("integrand is not integrable against the measure tail (growth ratio {growth:.3e})")]
    TailUnintegrable { growth: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {0} is not supported by this routine")]
    UnsupportedDimension(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sample lies outside the verification region: {0}")]
    SampleOutsideRegion(String),

    #[error("unbounded coefficient: {0}")]
    UnboundedCoefficient(String),

    #[error("time step {dt:.3e} exceeds the monotonicity bound {bound:.3e}")]
    UnstableTimeStep { dt: f64, bound: f64 },

    #[error("instability at step {step}: max {new_max:.6e} exceeds bound {bound:.6e}")]
    Instability { step: usize, new_max: f64, bound: f64 },

    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
