//! WebAssembly entry points for the browser demo: population curves, steady
//! states for parameter sweeps, and emission spectra.

use heom_qubit::model::{Coupling, DensityMatrix, ModelParams};
use heom_qubit::observables::linspace;
use heom_qubit::propagator::PropagationConfig;
use heom_qubit::study::{evolve, spectrum, steady_state, HierarchyOptions, Treatment};
use wasm_bindgen::prelude::*;

/// Horizon of steady-state searches.
const STEADY_HORIZON: f64 = 3000.0;

/// Field and bath strengths; all three field processes share `delta_f` and
/// `gamma_f`.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub delta_f: f64,
    pub gamma_f: f64,
    pub delta_b: f64,
    pub gamma_b: f64,
}

#[wasm_bindgen]
impl Model {
    #[wasm_bindgen(constructor)]
    pub fn new(delta_f: f64, gamma_f: f64, delta_b: f64, gamma_b: f64) -> Model {
        Model { delta_f, gamma_f, delta_b, gamma_b }
    }
}

impl Model {
    fn params(&self) -> ModelParams {
        ModelParams::default().with_field(self.delta_f, self.gamma_f).with_bath(self.delta_b, self.gamma_b, Coupling::Full)
    }
}

fn treatment(name: &str) -> Result<Treatment, String> {
    Treatment::parse(name).ok_or_else(|| format!("unknown treatment {name:?}, expected full, rwa or markov"))
}

/// Depth 0 selects the automatic policy.
fn hierarchy(depth: u32) -> HierarchyOptions {
    if depth == 0 {
        HierarchyOptions::default()
    } else {
        HierarchyOptions::fixed(depth as usize)
    }
}

/// `[t, population, Re rho_01, Im rho_01]` per sample, starting from the
/// excited state.
pub fn evolution_curve(model: &Model, treatment_name: &str, t_end: f64, stride: f64, depth: u32) -> Result<Vec<f64>, String> {
    let cfg = PropagationConfig { t_end, sample_stride: stride, ..Default::default() };
    let out = evolve(&model.params(), treatment(treatment_name)?, &DensityMatrix::excited(), &hierarchy(depth), &cfg)
        .map_err(|e| e.to_string())?;
    let mut flat = Vec::with_capacity(4 * out.times.len());
    for (t, r) in out.times.iter().zip(&out.states) {
        let c = r.coherence();
        flat.extend([*t, r.excited_population(), c.re, c.im]);
    }
    Ok(flat)
}

pub fn steady_excited_population(model: &Model, treatment_name: &str, depth: u32) -> Result<f64, String> {
    let cfg = PropagationConfig { t_end: STEADY_HORIZON, sample_stride: 0.5, ..Default::default() };
    steady_state(&model.params(), treatment(treatment_name)?, &hierarchy(depth), &cfg)
        .map(|s| s.population())
        .map_err(|e| e.to_string())
}

/// `[omega, intensity]` pairs of the max-normalized steady-state emission
/// spectrum.
#[allow(clippy::too_many_arguments)]
pub fn emission_spectrum(
    model: &Model,
    treatment_name: &str,
    tau_max: f64,
    tau_points: usize,
    omega_min: f64,
    omega_max: f64,
    omega_points: usize,
    depth: u32,
) -> Result<Vec<f64>, String> {
    let cfg = PropagationConfig { t_end: STEADY_HORIZON, sample_stride: 0.5, ..Default::default() };
    let taus = linspace(0.0, tau_max, tau_points);
    let omegas = linspace(omega_min, omega_max, omega_points);
    let out = spectrum(&model.params(), treatment(treatment_name)?, &hierarchy(depth), &cfg, &taus, &omegas)
        .map_err(|e| e.to_string())?;
    Ok(omegas.iter().zip(&out.spectrum.intensities).flat_map(|(w, s)| [*w, *s]).collect())
}

#[wasm_bindgen(js_name = evolution)]
pub fn evolution_js(model: &Model, treatment: &str, t_end: f64, stride: f64, depth: u32) -> Result<Vec<f64>, JsError> {
    evolution_curve(model, treatment, t_end, stride, depth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = steadyPopulation)]
pub fn steady_population_js(model: &Model, treatment: &str, depth: u32) -> Result<f64, JsError> {
    steady_excited_population(model, treatment, depth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = spectrum)]
#[allow(clippy::too_many_arguments)]
pub fn spectrum_js(
    model: &Model,
    treatment: &str,
    tau_max: f64,
    tau_points: usize,
    omega_min: f64,
    omega_max: f64,
    omega_points: usize,
    depth: u32,
) -> Result<Vec<f64>, JsError> {
    emission_spectrum(model, treatment, tau_max, tau_points, omega_min, omega_max, omega_points, depth)
        .map_err(|e| JsError::new(&e))
}
