//! Independent reference solutions: closed forms for exactly solvable
//! limits, stochastic-trajectory averaging for the field, and a Lindblad
//! baseline.

mod exact;
mod lindblad;
mod monte_carlo;

pub use exact::{critical_amplitude, ou_dephasing_coherence, rwa_bath_amplitude, rwa_bath_excited_population};
pub use lindblad::{
    lindblad_correlation, lindblad_evolution, lindblad_steady_state, liouvillian, LindbladRates,
};
pub use monte_carlo::{monte_carlo_evolution, sample_ou_path, McConfig, McResult};
