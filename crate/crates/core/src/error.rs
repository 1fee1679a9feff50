use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected} values, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid subdomain: {0}")]
    InvalidSubdomain(String),

    #[error("auxiliary weight check failed: {0}")]
    Eta0(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight power {power} outside the tabulated range [{min}, {max}]")]
    PowerOutOfRange { power: f64, min: f64, max: f64 },

    #[error("zero-mean constraint violated: {what} has mass {mass:e}")]
    MassConstraint { what: &'static str, mass: f64 },

    #[error("blow-up detected at step {step}: max |u| = {max_abs:e} exceeds cap {cap:e}")]
    BlowUp { step: usize, max_abs: f64, cap: f64 },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("negative curvature {curvature:e} at iteration {iteration}: bilinear form is not positive definite")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("cross-validation failed: {what} relative difference {rel:e} exceeds {tol:e}")]
    CrossValidation { what: &'static str, rel: f64, tol: f64 },

    #[error("parameter mismatch between primal and adjoint: {0}")]
    ParameterMismatch(String),

    #[error("forward verification failed: terminal distance {distance:e} exceeds {bound:e}")]
    Verification { distance: f64, bound: f64 },
}

impl Error {
    /// True for failures that mean an iterative method ran out of budget rather than
    /// a broken invariant.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::LinearSolver(_) | Error::BlowUp { .. })
    }
}
