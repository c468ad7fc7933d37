use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular (min eigenvalue {min_eigenvalue:.3e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state is not normalized (norm {norm:.17})")]
    NotNormalized { norm: f64 },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid probability {0}: must lie in [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid Schmidt spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),

    #[error("invalid protocol parameters: {0}")]
    InvalidParameters(String),

    #[error("correlation does not have the designed block structure: {0}")]
    StructureMismatch(String),

    #[error("element sum {side} is rank-deficient (min eigenvalue {min_eigenvalue:.3e})")]
    SingularSum { side: char, min_eigenvalue: f64 },

    #[error("canonical diagonal has a vanishing entry ({value:.3e})")]
    SingularLambda { value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
