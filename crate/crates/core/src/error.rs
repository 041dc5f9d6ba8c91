use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid polynomial or quadrature degree {0} (must be >= 1)")]
    InvalidDegree(usize),

    #[error("reference coordinate {0} lies outside [-1, 1]")]
    OutOfRange(f64),

    #[error("invalid mesh spec: {field} {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("degenerate mesh: element {element} has Jacobian determinant {det:e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("element index {index} out of range (mesh has {count} elements)")]
    InvalidElement { index: usize, count: usize },

    #[error("quadrature degree {quad} is below the basis degree {p}")]
    InvalidQuadrature { quad: usize, p: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid projector parameters: a_curl = {a_curl}, a_mass = {a_mass}")]
    InvalidParams { a_curl: f64, a_mass: f64 },

    #[error("invalid step controls: {0}")]
    InvalidControls(String),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    SolveAccuracy { residual: f64, tol: f64 },

    #[error("inconsistent right-hand side: {0}")]
    InconsistentRhs(String),

    #[error("Picard iteration did not converge in {iters} iterations (last update {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed { step: usize, source: Box<Error> },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
