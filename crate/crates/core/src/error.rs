use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeomError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("hierarchy of depth {depth} needs {slots} slots, budget is {budget}")]
    ResourceLimit { depth: usize, slots: u128, budget: usize },

    #[error("state layout mismatch: expected {expected} slots, got {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("step size underflow at t = {time} (h = {step:e}); system too stiff for the explicit integrator")]
    StepSizeUnderflow { time: f64, step: f64 },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("physical state invariant violated at t = {time}: {reason}")]
    InvariantViolation { time: f64, reason: String },

    #[error("steady state not reached by t = {time} (last variation {variation:e}): {detail}")]
    NotConverged { time: f64, variation: f64, detail: String },

    #[error("hierarchy depth did not converge up to depth {depth} (last difference {difference:e})")]
    DepthNotConverged { depth: usize, difference: f64 },

    #[error("correlation window too short: |C(tau_max)|/|C(0)| = {ratio:e}")]
    WindowInadequate { ratio: f64 },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
}

pub type Result<T> = std::result::Result<T, HeomError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> HeomError {
    HeomError::InvalidParameter { name, reason: reason.into() }
}
