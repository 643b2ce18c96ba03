use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("eigenvalue solver did not converge for mode {mode}: residual {residual:.3e}")]
    Convergence { mode: usize, residual: f64 },

    #[error("kernel derivative unavailable: {0}")]
    KernelDerivative(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("step size too large for mode {mode} (lambda^2 = {lambda_sq}): {reason}")]
    StepSize {
        mode: usize,
        lambda_sq: f64,
        reason: String,
    },

    #[error("internal consistency check failed: {what} (gap {gap:.3e} > tolerance {tol:.3e})")]
    InternalConsistency { what: String, gap: f64, tol: f64 },

    #[error("quadrature inconsistency: Gram matrix not Hermitian (defect {0:.3e})")]
    QuadratureInconsistency(f64),

    #[error("near-degenerate family: lower frame bound {lower:.3e}, condition {condition:.3e} exceeds cap {cap:.1e}")]
    NearDegenerate {
        lower: f64,
        condition: f64,
        cap: f64,
    },

    #[error("not controllable at horizon T = {horizon}: lower frame bound {lower:.3e}, condition {condition:.3e} exceeds cap {cap:.1e}")]
    NotControllable {
        horizon: f64,
        lower: f64,
        condition: f64,
        cap: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
