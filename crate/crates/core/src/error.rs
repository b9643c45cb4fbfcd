use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("anisotropy is not strongly monotone: sampled quotient {quotient:e}")]
    NotStronglyMonotone { quotient: f64 },

    #[error("anisotropy is not positive: A(p) = {value:e} for a sampled p != 0")]
    NotPositive { value: f64 },

    #[error("quadrature failed to reach tolerance {tol:e} on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64, tol: f64 },

    #[error("initial datum out of range: max |phi0| = {max_abs}")]
    InitialDatumOutOfRange { max_abs: f64 },

    #[error("singular mode {mode}: zero multiplier meets rhs magnitude {magnitude:e}")]
    SingularMode { mode: usize, magnitude: f64 },

    #[error("non-finite value in field `{field}`")]
    NonFiniteField { field: &'static str },

    #[error("energy safeguard exhausted at t = {t}: dt reached dt_min = {dt_min:e}")]
    EnergySafeguardExhausted { t: f64, dt_min: f64 },

    #[error("estimate `{check}` violated at t = {t}: lhs = {lhs:e}, rhs = {rhs:e}")]
    EstimateViolated {
        check: &'static str,
        t: f64,
        lhs: f64,
        rhs: f64,
    },

    #[error("excess scaling slope undefined: {reason}")]
    SlopeUndefined { reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable class name, e.g. `NotStronglyMonotone`.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotStronglyMonotone { .. } => "NotStronglyMonotone",
            Error::NotPositive { .. } => "NotPositive",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::InitialDatumOutOfRange { .. } => "InitialDatumOutOfRange",
            Error::SingularMode { .. } => "SingularMode",
            Error::NonFiniteField { .. } => "NonFiniteField",
            Error::EnergySafeguardExhausted { .. } => "EnergySafeguardExhausted",
            Error::EstimateViolated { .. } => "EstimateViolated",
            Error::SlopeUndefined { .. } => "SlopeUndefined",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
