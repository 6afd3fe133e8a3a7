use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    #[error("singular matrix at node {node} while {context}")]
    SingularAt { context: &'static str, node: usize },

    #[error("field is not compactly supported: max outside |x| >= R is {max_outside:e} (tolerance {tolerance:e})")]
    NotCompactlySupported { max_outside: f64, tolerance: f64 },

    #[error("gauge differs from the identity on the outer margin by {deviation:e}")]
    GaugeNotIdentity { deviation: f64 },

    #[error("direction is not normalized: zeta1^2 + zeta2^2 - 1 = {defect:e}")]
    NonNormalized { defect: f64 },

    #[error("spectral parameter on the unit circle; use the boundary operator")]
    OnUnitCircle,

    #[error("fixed-point solver did not converge after {iterations} iterations (last residual {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("determinant collapsed below the floor: min |det| = {min_det:e}")]
    DetCollapse { min_det: f64 },

    #[error("{what} disagree: {discrepancy:e} exceeds {tolerance:e}")]
    Disagreement {
        what: &'static str,
        discrepancy: f64,
        tolerance: f64,
    },

    #[error("Riemann-Hilbert data not contractive: max |b - I| = {norm:e}")]
    NotContractive { norm: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::SingularAt { .. }
                | Error::NonConvergence { .. }
                | Error::DetCollapse { .. }
                | Error::Disagreement { .. }
                | Error::NotContractive { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
