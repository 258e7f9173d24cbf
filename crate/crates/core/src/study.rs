//! High-level runs under the three treatments with automatic selection of
//! the hierarchy depth.

use std::ops::ControlFlow;

use crate::error::{invalid, HeomError, Result};
use crate::hierarchy::{assemble_with, Generator, HierarchyState, Truncation, DEFAULT_SLOT_BUDGET};
use crate::model::{Coupling, DensityMatrix, ModelParams, C64};
use crate::observables::{emission_spectrum, two_time_correlation, CorrelationSeries, SpectrumResult};
use crate::oracles::{lindblad_correlation, lindblad_evolution, lindblad_steady_state};
use crate::propagator::{find_steady_state, initial_state, propagate, propagate_with, Defects, PropagationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Treatment {
    Full,
    Rwa,
    Markov,
}

impl Treatment {
    pub const ALL: [Treatment; 3] = [Treatment::Full, Treatment::Rwa, Treatment::Markov];

    pub fn name(self) -> &'static str {
        match self {
            Treatment::Full => "full",
            Treatment::Rwa => "rwa",
            Treatment::Markov => "markov",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(s))
    }

    /// Parameters with the bath coupling form this treatment implies.
    pub fn apply(self, params: &ModelParams) -> ModelParams {
        match self {
            Treatment::Full => params.with_coupling(Coupling::Full),
            Treatment::Rwa => params.with_coupling(Coupling::Rwa),
            Treatment::Markov => *params,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoDepth {
    pub start: usize,
    pub step: usize,
    pub max: usize,
    /// Sup-norm difference between depths `L - step` and `L` at which `L`
    /// is accepted.
    pub tol: f64,
}

impl Default for AutoDepth {
    fn default() -> Self {
        Self { start: 4, step: 2, max: 60, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthPolicy {
    Fixed(usize),
    Auto(AutoDepth),
}

impl Default for DepthPolicy {
    fn default() -> Self {
        DepthPolicy::Auto(AutoDepth::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyOptions {
    pub depth: DepthPolicy,
    pub truncation: Truncation,
    pub slot_budget: usize,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self { depth: DepthPolicy::default(), truncation: Truncation::Total, slot_budget: DEFAULT_SLOT_BUDGET }
    }
}

impl HierarchyOptions {
    pub fn fixed(depth: usize) -> Self {
        Self { depth: DepthPolicy::Fixed(depth), ..Default::default() }
    }
}

/// Depth used for the reported result and, under the automatic policy, the
/// shallower depth it was compared with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthReport {
    pub depth: usize,
    pub slots: usize,
    pub compared_with: Option<usize>,
    pub difference: Option<f64>,
}

impl DepthReport {
    fn markov() -> Self {
        Self { depth: 0, slots: 1, compared_with: None, difference: None }
    }
}

/// Run `f` at increasing depth until two consecutive results agree in the
/// sup-norm given by `distance`. `f` receives the previous result for warm
/// starts.
fn with_depth<T>(
    params: &ModelParams,
    options: &HierarchyOptions,
    mut f: impl FnMut(&Generator, Option<&T>) -> Result<T>,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<(T, DepthReport)> {
    let build = |depth| assemble_with(params, depth, options.truncation, options.slot_budget);
    match options.depth {
        DepthPolicy::Fixed(depth) => {
            let gen = build(depth)?;
            let out = f(&gen, None)?;
            Ok((out, DepthReport { depth, slots: gen.slots(), compared_with: None, difference: None }))
        }
        DepthPolicy::Auto(auto) => {
            if auto.step == 0 || auto.max < auto.start || auto.tol.is_nan() || auto.tol <= 0.0 {
                return Err(invalid("depth", "automatic depth needs step > 0, max >= start and tol > 0"));
            }
            let gen = build(auto.start)?;
            let mut prev = f(&gen, None)?;
            let mut depth = auto.start;
            let mut last_diff = f64::INFINITY;
            // a hierarchy without active directions is exact at depth 0
            if gen.slots() == 1 {
                return Ok((prev, DepthReport { depth, slots: 1, compared_with: None, difference: Some(0.0) }));
            }
            while depth + auto.step <= auto.max {
                let next_depth = depth + auto.step;
                let gen = build(next_depth)?;
                let next = f(&gen, Some(&prev))?;
                last_diff = distance(&prev, &next);
                if last_diff < auto.tol {
                    let report = DepthReport {
                        depth: next_depth,
                        slots: gen.slots(),
                        compared_with: Some(depth),
                        difference: Some(last_diff),
                    };
                    return Ok((next, report));
                }
                prev = next;
                depth = next_depth;
            }
            Err(HeomError::DepthNotConverged { depth, difference: last_diff })
        }
    }
}

fn max_entry_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct SteadyOutcome {
    pub rho: DensityMatrix,
    pub depth: DepthReport,
    /// Detection time, absent for the Markovian treatment.
    pub time: Option<f64>,
    pub defects: Defects,
    pub hierarchy: Option<HierarchyState>,
}

impl SteadyOutcome {
    pub fn population(&self) -> f64 {
        self.rho.excited_population()
    }
}

struct SteadyRun {
    rho: DensityMatrix,
    time: f64,
    defects: Defects,
    hierarchy: HierarchyState,
    gen_layout: crate::hierarchy::HierarchyLayout,
}

fn heom_steady(gen: &Generator, warm: Option<&SteadyRun>, cfg: &PropagationConfig) -> Result<SteadyRun> {
    let start = match warm {
        Some(prev) => HierarchyState::embed(&prev.hierarchy, &prev.gen_layout, gen.layout()),
        None => initial_state(&DensityMatrix::excited(), gen.layout()),
    };
    let ss = find_steady_state(gen, &start, cfg)?;
    Ok(SteadyRun {
        rho: ss.rho,
        time: ss.time,
        defects: ss.defects,
        hierarchy: ss.hierarchy,
        gen_layout: gen.layout().clone(),
    })
}

/// Stationary reduced state, reached from the excited state.
pub fn steady_state(
    params: &ModelParams,
    treatment: Treatment,
    options: &HierarchyOptions,
    cfg: &PropagationConfig,
) -> Result<SteadyOutcome> {
    let params = treatment.apply(params);
    if treatment == Treatment::Markov {
        let rho = lindblad_steady_state(&params)?;
        return Ok(SteadyOutcome { rho, depth: DepthReport::markov(), time: None, defects: Defects::default(), hierarchy: None });
    }
    let (run, depth) = with_depth(&params, options, |gen, warm| heom_steady(gen, warm, cfg), |a, b| max_entry_diff(&a.rho, &b.rho))?;
    Ok(SteadyOutcome {
        rho: run.rho,
        depth,
        time: Some(run.time),
        defects: run.defects,
        hierarchy: Some(run.hierarchy),
    })
}

#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub depth: DepthReport,
    pub defects: Defects,
}

impl EvolutionOutcome {
    pub fn populations(&self) -> Vec<f64> {
        self.states.iter().map(|r| r.excited_population()).collect()
    }

    pub fn coherences(&self) -> Vec<C64> {
        self.states.iter().map(|r| r.coherence()).collect()
    }
}

fn trajectory_diff(a: &[DensityMatrix], b: &[DensityMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| max_entry_diff(x, y)).fold(0.0, f64::max)
}

/// Reduced state sampled every `cfg.sample_stride` up to `cfg.t_end`.
pub fn evolve(
    params: &ModelParams,
    treatment: Treatment,
    rho0: &DensityMatrix,
    options: &HierarchyOptions,
    cfg: &PropagationConfig,
) -> Result<EvolutionOutcome> {
    cfg.validate()?;
    let params = treatment.apply(params);
    if treatment == Treatment::Markov {
        let times = cfg.sample_times();
        let states = lindblad_evolution(&params, rho0, &times)?;
        let mut defects = Defects::default();
        for r in &states {
            defects.trace = defects.trace.max(crate::model::trace_defect(r.matrix()));
            defects.hermiticity = defects.hermiticity.max(crate::model::hermiticity_defect(r.matrix()));
        }
        return Ok(EvolutionOutcome { times, states, depth: DepthReport::markov(), defects });
    }
    let (traj, depth) = with_depth(
        &params,
        options,
        |gen, _| propagate(gen, &initial_state(rho0, gen.layout()), cfg),
        |a, b| trajectory_diff(&a.physical_states, &b.physical_states),
    )?;
    Ok(EvolutionOutcome { times: traj.times, states: traj.physical_states, depth, defects: traj.defects })
}

#[derive(Debug, Clone)]
pub struct SpectrumOutcome {
    pub steady: DensityMatrix,
    pub correlation: CorrelationSeries,
    pub spectrum: SpectrumResult,
    pub depth: DepthReport,
    pub defects: Defects,
}

/// Largest deviation of `C(0)` from the steady excited population, or from
/// being real, that is tolerated.
pub const CORRELATION_ORIGIN_TOL: f64 = 1e-8;

fn check_origin(corr: &CorrelationSeries, rho: &DensityMatrix) -> Result<()> {
    let c0 = corr.at_zero();
    let dev = (c0 - C64::from(rho.excited_population())).norm();
    if dev > CORRELATION_ORIGIN_TOL {
        return Err(HeomError::InvariantViolation {
            time: 0.0,
            reason: format!("C(0) = {c0} differs from the steady population by {dev:e}"),
        });
    }
    Ok(())
}

struct CorrelationRun {
    steady: SteadyRun,
    corr: CorrelationSeries,
}

/// Steady hierarchy, advanced one further steady window, then the two-time
/// correlation over `tau_grid` and its spectrum on `omega_grid`.
pub fn spectrum(
    params: &ModelParams,
    treatment: Treatment,
    options: &HierarchyOptions,
    cfg: &PropagationConfig,
    tau_grid: &[f64],
    omega_grid: &[f64],
) -> Result<SpectrumOutcome> {
    let params = treatment.apply(params);
    if treatment == Treatment::Markov {
        let rho = lindblad_steady_state(&params)?;
        let corr = CorrelationSeries::new(tau_grid.to_vec(), lindblad_correlation(&params, tau_grid)?)?;
        check_origin(&corr, &rho)?;
        let spectrum = emission_spectrum(&corr, omega_grid)?;
        return Ok(SpectrumOutcome { steady: rho, correlation: corr, spectrum, depth: DepthReport::markov(), defects: Defects::default() });
    }
    let control = cfg.step_control();
    let run = |gen: &Generator, warm: Option<&CorrelationRun>| -> Result<CorrelationRun> {
        let mut steady = heom_steady(gen, warm.map(|w| &w.steady), cfg)?;
        let t1 = steady.time + cfg.steady_window;
        propagate_with(gen, &mut steady.hierarchy, steady.time, t1, &[], &control, |_, _| ControlFlow::Continue(()))?;
        steady.rho = DensityMatrix::from_matrix_unchecked(steady.hierarchy.slot(0));
        let corr = two_time_correlation(gen, &steady.hierarchy, tau_grid, &control)?;
        check_origin(&corr, &steady.rho)?;
        Ok(CorrelationRun { steady, corr })
    };
    let distance = |a: &CorrelationRun, b: &CorrelationRun| {
        a.corr.values.iter().zip(&b.corr.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    };
    let (out, depth) = with_depth(&params, options, run, distance)?;
    let spectrum = emission_spectrum(&out.corr, omega_grid)?;
    Ok(SpectrumOutcome { steady: out.steady.rho, correlation: out.corr, spectrum, depth, defects: out.steady.defects })
}
