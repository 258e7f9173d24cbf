//! Hierarchical equations of motion for a qubit driven by classical
//! Ornstein–Uhlenbeck field noise and coupled to a zero-temperature
//! Lorentzian bath.

pub mod error;
pub mod hierarchy;
pub mod integrator;
pub mod model;
pub mod observables;
pub mod oracles;
pub mod propagator;
pub mod study;

pub use error::{HeomError, Result};
