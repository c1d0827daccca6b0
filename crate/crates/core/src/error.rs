use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid norm specification `{0}`")]
    InvalidNorm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular chart derivative in chart `{chart}`")]
    SingularChart { chart: String },

    #[error("non-finite Jacobian entry at sample point {point:?}")]
    NonFiniteJacobian { point: Vec<f64> },

    #[error("empty operator set")]
    EmptySet,

    #[error("point {point:?} lies outside the domain of chart `{chart}`")]
    OutsideChart { chart: String, point: Vec<f64> },

    #[error("points lie in no common chart")]
    NoCommonChart,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        best: Vec<f64>,
        residual: f64,
    },

    #[error("path lifting failed at t = {t} (step underflow)")]
    LiftFailure { t: f64, trace: Box<crate::invert::LiftTrace> },

    #[error("r = {r} is beyond the profile range {max}")]
    OutOfRange { r: f64, max: f64 },

    #[error("unknown registry entry `{0}`")]
    UnknownEntry(String),
}

pub type Result<T> = std::result::Result<T, Error>;
