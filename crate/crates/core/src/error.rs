use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("non-finite value in {what} at {index}")]
    NonFinite { what: &'static str, index: String },

    #[error("normalization violated: trace is {trace} (expected 1)")]
    Normalization { trace: f64 },

    #[error("hermiticity violated in {what} at {index}: residual {residual:e}")]
    NotHermitian {
        what: &'static str,
        index: String,
        residual: f64,
    },

    #[error("{what} has negative population {value:e} at {index}")]
    NegativeDiagonal {
        what: &'static str,
        index: String,
        value: f64,
    },

    #[error("{what} is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositive {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("commutator [{left}, {right}] has Frobenius norm {residual:e} above threshold {threshold:e}; the interaction is not nondestructive")]
    CommutatorViolation {
        left: String,
        right: String,
        residual: f64,
        threshold: f64,
    },

    #[error("{operator} does not have the {expected} tensor structure: residual {residual:e}")]
    FactorStructure {
        operator: String,
        expected: &'static str,
        residual: f64,
    },

    #[error("joint diagonalization failed: off-diagonal residual {residual:e} for {operator}")]
    JointDiagonalizationFailure { operator: String, residual: f64 },

    #[error("invalid pulse {index}: {reason}")]
    InvalidPulse { index: usize, reason: String },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("time grid must be nondecreasing at sample {0}")]
    UnsortedGrid(usize),

    #[error("index {what}={index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("oracle step {dt} exceeds {limit} (smoothing width / 10)")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coherence ({m},{n}) has zero weight; the effect density is undefined")]
    ZeroWeight { m: usize, n: usize },

    #[error("integral impacts are not uniform at t = {0}; the factorized form does not apply")]
    NonUniformImpact(f64),

    #[error("parametric effect density has no atoms; use the analytic decoherence factors")]
    ParametricDensity,

    #[error("expectation value has imaginary part {imag:e} at sample {sample}")]
    NotReal { sample: usize, imag: f64 },

    #[error("composite dimension {dim} exceeds the oracle limit {limit}")]
    TooLarge { dim: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Empty { .. } => "empty",
            Error::NonFinite { .. } => "non_finite",
            Error::Normalization { .. } => "normalization",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::NegativeDiagonal { .. } => "negative_diagonal",
            Error::NotPositive { .. } => "not_positive",
            Error::CommutatorViolation { .. } => "commutator_violation",
            Error::FactorStructure { .. } => "factor_structure",
            Error::JointDiagonalizationFailure { .. } => "joint_diagonalization_failure",
            Error::InvalidPulse { .. } => "invalid_pulse",
            Error::NegativeTime(_) => "negative_time",
            Error::UnsortedGrid(_) => "unsorted_grid",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::StepTooLarge { .. } => "step_too_large",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::ZeroWeight { .. } => "zero_weight",
            Error::NonUniformImpact(_) => "non_uniform_impact",
            Error::ParametricDensity => "parametric_density",
            Error::NotReal { .. } => "not_real",
            Error::TooLarge { .. } => "too_large",
        }
    }
}
