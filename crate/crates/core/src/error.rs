use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Levy model has zero variance; simulation and spectral formulas need sigma_l > 0")]
    ZeroVariance,

    #[error("coefficient function is not continuous: {0}")]
    NotContinuous(String),

    #[error("coefficient function is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("Peano-Baker series did not reach tol {tol:e} within {max_terms} terms (last norm {:e})", term_norms.last().copied().unwrap_or(f64::NAN))]
    Divergence {
        tol: f64,
        max_terms: usize,
        term_norms: Vec<f64>,
    },

    #[error("commutativity check failed: max commutator norm {max_violation:e} exceeds {tol:e}")]
    NotCommutative { max_violation: f64, tol: f64 },

    #[error("controllability matrix is singular at t = {t} (min singular value {min_singular_value:e})")]
    SingularControllability { t: f64, min_singular_value: f64 },

    #[error("kernel grids differ: {0}")]
    GridMismatch(String),

    #[error("a stability certificate is required: {0}")]
    MissingCertificate(String),

    #[error("time {t} is not a node of the path grid")]
    OffGrid { t: f64 },

    #[error("postcondition violated: {0}")]
    Postcondition(String),

    #[error("model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
