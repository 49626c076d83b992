use thiserror::Error;

use crate::grid::Point;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("negative value {value:e} at cell {index} (x = {point:?})")]
    NegativeValue { index: usize, point: Point, value: f64 },

    #[error("non-finite value at cell {index}")]
    NonFinite { index: usize },

    #[error("exponent m = {0} must satisfy m > 1")]
    InvalidExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("time step {dt:e} exceeds the admissible CFL step {admissible:e}")]
    CflViolation { dt: f64, admissible: f64 },

    #[error("support reaches within 3 cells of the {side} face of axis {axis} near x = {point:?}; enlarge the box")]
    SupportTouchesBoundary { axis: usize, side: &'static str, point: Point },

    #[error("numerical blow-up (NaN or infinity) at t = {t}")]
    NumericalBlowUp { t: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}: malformed file: {message}")]
    Format { path: String, message: String },

    #[error("no snapshots in {0}")]
    NoSnapshots(String),
}

impl CoreError {
    /// Aborts caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::NonFinite { .. }
                | CoreError::CflViolation { .. }
                | CoreError::NumericalBlowUp { .. }
                | CoreError::SupportTouchesBoundary { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
