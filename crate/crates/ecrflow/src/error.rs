//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model validation, integration, and derivative routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("transversality violated in region {corner} on surface {surface}: Dh·F = {value:.6e} < {margin:.6e} at {state:?}")]
    TransversalityViolation {
        corner: String,
        surface: usize,
        state: Vec<f64>,
        value: f64,
        margin: f64,
    },

    #[error("no impact with surface {surface} within horizon {horizon}")]
    NoImpact { surface: usize, horizon: f64 },

    #[error("event count exceeded the cap of {max_events}")]
    MaxEventsExceeded { max_events: usize },

    #[error("non-transverse crossing of surface {surface}: |Dh·F| = {value:.6e} < {margin:.6e} at {state:?}")]
    NonTransverseCrossing {
        surface: usize,
        state: Vec<f64>,
        value: f64,
        margin: f64,
    },

    #[error("state left the model's declared domain at {state:?}")]
    OutOfDomain { state: Vec<f64> },

    #[error("trajectory entered a zero-velocity region: component {component} = {value:.6e}")]
    ZeroVelocityRegion { component: usize, value: f64 },

    #[error("denominator Dh·F = {value:.6e} is below the margin {margin:.6e}")]
    DivisionNearZero { value: f64, margin: f64 },

    #[error("crossing order is ambiguous between surfaces {first} and {second} (gap {gap:.3e})")]
    AmbiguousWord { first: usize, second: usize, gap: f64 },

    #[error("surfaces {i} and {j} are not tangent at the reference point (angle residual {residual:.3e})")]
    NotTangent { i: usize, j: usize, residual: f64 },

    #[error("section is not transverse to the field: |Dσ·F| = {value:.6e}")]
    NonTransverseSection { value: f64 },

    #[error("no return to the section within the window ({t_min}, {t_max})")]
    NoReturn { t_min: f64, t_max: f64 },

    #[error("section anchor lies within {dist:.3e} of event surface {surface}")]
    SectionOnDiscontinuity { surface: usize, dist: f64 },

    #[error("scalar return map does not map [{lo}, {hi}] into itself")]
    NoContraction { lo: f64, hi: f64 },

    #[error("perturbation size {size} is not below the transversality margin {margin}")]
    PerturbationTooLarge { size: f64, margin: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
