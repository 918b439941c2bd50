use thiserror::Error;

/// Errors raised while building designs, fitting models, or scoring candidates.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FicError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("indicator has length {got}, template has {expected} slots")]
    IndicatorLength { expected: usize, got: usize },

    #[error("protected slot {slot} is switched off")]
    ProtectedSlotOff { slot: String },

    #[error("interaction slot {slot} is on while a parent main effect is off")]
    HierarchyViolation { slot: String },

    #[error("response value {value} at row {row} is invalid for the {family} family")]
    InvalidResponse {
        row: usize,
        value: f64,
        family: &'static str,
    },

    #[error("design matrix is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("separation detected: coefficient magnitude {magnitude:.3e} exceeds limit")]
    Separation { magnitude: f64 },

    #[error("{what} is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("focus error: {0}")]
    Focus(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("candidate space of {count} models exceeds the limit of {limit}")]
    TooManyCandidates { count: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, FicError>;

impl FicError {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FicError::RankDeficient { .. }
                | FicError::NonConvergence { .. }
                | FicError::Separation { .. }
                | FicError::Singular { .. }
        )
    }
}
