use thiserror::Error;

pub type Result<T> = std::result::Result<T, DppError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DppError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel is not positive semidefinite: eigenvalue {min_eigenvalue:e} below -{tol:e}·λ_max (λ_max = {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        tol: f64,
    },

    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("row {row} has (numerically) zero norm")]
    ZeroRow { row: usize },

    #[error("interpolation imaginary residual {residual:e} exceeds threshold {threshold:e}")]
    InterpolationResidual { residual: f64, threshold: f64 },

    #[error("all step probabilities vanished at step {step}")]
    DeadEnd { step: usize },

    #[error("requested {k} items but the feature matrix has numerical rank below that")]
    RankTooLow { k: usize },

    #[error("no subset satisfies the constraints with positive probability")]
    EmptySupport,

    #[error("instance too large for brute force: {count} > {limit}")]
    TooLarge { count: f64, limit: f64 },
}

impl DppError {
    /// True for failures caused by the numbers rather than the shape of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DppError::ZeroRow { .. }
                | DppError::InterpolationResidual { .. }
                | DppError::DeadEnd { .. }
                | DppError::RankTooLow { .. }
                | DppError::EmptySupport
        )
    }
}
