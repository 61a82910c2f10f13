use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("vector must have positive dimension")]
    EmptyVector,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("non-finite iterate at k = {k}")]
    NonFiniteIterate { k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size violation: eta = {eta} must exceed {lower}")]
    StepSizeViolation { eta: f64, lower: f64 },

    #[error("starting point is outside the feasible set")]
    InfeasibleStart,

    #[error("need at least {needed} qualifying records, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("residual is exactly zero at k = {k}; rate exponent is -inf")]
    DegenerateResidual { k: usize },

    #[error("operation not supported for {0} sets")]
    UnsupportedSet(&'static str),

    #[error("dimension {dim} too large for grid enumeration (max 2)")]
    DimTooLarge { dim: usize },

    #[error("problem has no known solution inside its feasible set")]
    InfeasibleSolution,

    #[error("parameter violation: {0}")]
    ParameterViolation(String),

    #[error("operator is not monotone: symmetric part has eigenvalue {min_eigenvalue}")]
    NotMonotone { min_eigenvalue: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("degenerate r: |1 + 2r| = {0} is too small")]
    DegenerateR(f64),

    #[error("algorithm {algorithm} is not admissible for problem {problem}")]
    Inadmissible { algorithm: String, problem: String },

    #[error("singular linear system in resolvent")]
    SingularResolvent,
}

pub type Result<T> = std::result::Result<T, Error>;
