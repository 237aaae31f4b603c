use thiserror::Error;

use crate::lagrangian::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("field evaluation produced a non-finite value at the expansion point")]
    NonFiniteField,

    #[error("derivative order {order} is not supported (maximum {max})")]
    OrderUnsupported { order: usize, max: usize },

    #[error("fibre direction is too close to the zero section (|y| = {norm:e})")]
    NearZeroDirection { norm: f64 },

    #[error("L-metric is near degenerate (condition number {condition:e})")]
    NearDegenerateMetric { condition: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integration entered the excluded set at t = {t}: {reason}")]
    ExcludedSetEntered { t: f64, reason: String },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("point lies outside the chart trust region (|x~| = {norm}, radius {radius})")]
    OutsideTrustRegion { norm: f64, radius: f64 },

    #[error("Newton iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged {
        iterate: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("chart Jacobian is singular")]
    SingularJacobian,

    #[error("connection is not admissible for this operation: {0}")]
    InadmissibleConnection(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}
