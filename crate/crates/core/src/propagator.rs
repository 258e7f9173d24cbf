//! Time propagation of the hierarchy from a factorized initial state and
//! steady-state detection.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, HeomError, Result};
use crate::hierarchy::{Generator, HierarchyLayout, HierarchyState};
use crate::integrator::{Dopri5, IntegrationStats, StepControl};
use crate::model::{hermiticity_defect, trace_defect, DensityMatrix, Mat2, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub t_end: f64,
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_stride: f64,
    pub steady_tol: f64,
    pub steady_window: f64,
    pub max_steps: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            dt_init: 1e-2,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            sample_stride: 0.1,
            steady_tol: 1e-9,
            steady_window: 20.0,
            max_steps: 50_000_000,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_end", self.t_end),
            ("dt_init", self.dt_init),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("sample_stride", self.sample_stride),
            ("steady_tol", self.steady_tol),
            ("steady_window", self.steady_window),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            h_init: self.dt_init,
            max_steps: self.max_steps,
            ..Default::default()
        }
    }

    /// `0, stride, 2 stride, ...` up to and including `t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        uniform_grid(self.t_end, self.sample_stride)
    }
}

pub(crate) fn uniform_grid(t_end: f64, stride: f64) -> Vec<f64> {
    let n = (t_end / stride + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|i| i as f64 * stride).collect();
    if t_end - out[n] > 1e-9 * stride {
        out.push(t_end);
    }
    out
}

/// Physical slot holds `rho0`, all auxiliary slots are zero.
pub fn initial_state(rho0: &DensityMatrix, layout: &HierarchyLayout) -> HierarchyState {
    let mut s = HierarchyState::zeros(layout.len());
    s.set_slot(0, rho0.matrix());
    s
}

/// As [`initial_state`], validating a raw matrix first.
pub fn initial_state_from_matrix(rho0: Mat2, layout: &HierarchyLayout) -> Result<HierarchyState> {
    Ok(initial_state(&DensityMatrix::new(rho0)?, layout))
}

/// Largest trace and Hermiticity defects of the physical slot over the
/// recorded samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Defects {
    pub trace: f64,
    pub hermiticity: f64,
}

impl Defects {
    fn record(&mut self, m: &Mat2) {
        self.trace = self.trace.max(trace_defect(m));
        self.hermiticity = self.hermiticity.max(hermiticity_defect(m));
    }

    pub fn max(&self) -> f64 {
        self.trace.max(self.hermiticity)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub physical_states: Vec<DensityMatrix>,
    pub final_hierarchy: HierarchyState,
    pub stats: IntegrationStats,
    pub defects: Defects,
}

impl Trajectory {
    pub fn populations(&self) -> Vec<f64> {
        self.physical_states.iter().map(|r| r.excited_population()).collect()
    }

    pub fn coherences(&self) -> Vec<C64> {
        self.physical_states.iter().map(|r| r.coherence()).collect()
    }
}

fn block_to_mat(v: &[C64]) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

/// Integrate `state` in place from `t0` to `t_end` under `gen`, calling
/// `observer` with the physical slot at each sample time. No physical checks
/// are made, so this also serves non-Hermitian hierarchies.
pub fn propagate_with<O>(
    gen: &Generator,
    state: &mut HierarchyState,
    t0: f64,
    t_end: f64,
    samples: &[f64],
    control: &StepControl,
    mut observer: O,
) -> Result<IntegrationStats>
where
    O: FnMut(f64, &Mat2) -> ControlFlow<()>,
{
    if state.slots() != gen.slots() {
        return Err(HeomError::LayoutMismatch { expected: gen.slots(), found: state.slots() });
    }
    let mut solver = Dopri5::new(4 * gen.slots(), 4);
    solver.integrate(
        |x, out| gen.apply_unchecked(x, out),
        state.as_mut_slice(),
        t0,
        t_end,
        samples,
        control,
        |t, v| observer(t, &block_to_mat(v)),
    )
}

const PHYSICAL_TOL: f64 = 1e-8;

fn check_physical(t: f64, m: &Mat2) -> Result<()> {
    let td = trace_defect(m);
    let hd = hermiticity_defect(m);
    if td > PHYSICAL_TOL || hd > PHYSICAL_TOL || !td.is_finite() || !hd.is_finite() {
        return Err(HeomError::InvariantViolation {
            time: t,
            reason: format!("trace defect {td:e}, hermiticity defect {hd:e}"),
        });
    }
    Ok(())
}

/// Propagate to `cfg.t_end`, sampling the physical slot every
/// `cfg.sample_stride`.
pub fn propagate(gen: &Generator, state: &HierarchyState, cfg: &PropagationConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let samples = cfg.sample_times();
    let mut work = state.clone();
    let mut times = Vec::with_capacity(samples.len());
    let mut physical_states = Vec::with_capacity(samples.len());
    let mut violation = None;
    let mut defects = Defects::default();
    let stats = propagate_with(gen, &mut work, 0.0, cfg.t_end, &samples, &cfg.step_control(), |t, m| {
        if let Err(e) = check_physical(t, m) {
            violation = Some(e);
            return ControlFlow::Break(());
        }
        defects.record(m);
        times.push(t);
        physical_states.push(DensityMatrix::from_matrix_unchecked(*m));
        ControlFlow::Continue(())
    })?;
    if let Some(e) = violation {
        return Err(e);
    }
    Ok(Trajectory { times, physical_states, final_hierarchy: work, stats, defects })
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// Time at which the windowed variation first fell below tolerance.
    pub time: f64,
    pub variation: f64,
    /// Full hierarchy at `time`, needed for two-time correlations.
    pub hierarchy: HierarchyState,
    pub defects: Defects,
}

fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Propagate until the physical slot varies by less than `cfg.steady_tol`
/// (max-norm) across a trailing window of length `cfg.steady_window`.
pub fn find_steady_state(gen: &Generator, state: &HierarchyState, cfg: &PropagationConfig) -> Result<SteadyState> {
    cfg.validate()?;
    if !gen.table().directions.iter().any(|d| d.active) {
        return Err(HeomError::NotConverged {
            time: 0.0,
            variation: f64::INFINITY,
            detail: "no dissipative coupling is active".into(),
        });
    }
    let samples = cfg.sample_times();
    let mut work = state.clone();
    let mut window: VecDeque<(f64, Mat2)> = VecDeque::new();
    let mut variation = f64::INFINITY;
    let mut detected = None;
    let mut violation = None;
    let mut defects = Defects::default();
    let eps = 1e-9 * cfg.sample_stride;
    propagate_with(gen, &mut work, 0.0, cfg.t_end, &samples, &cfg.step_control(), |t, m| {
        if let Err(e) = check_physical(t, m) {
            violation = Some(e);
            return ControlFlow::Break(());
        }
        defects.record(m);
        window.push_back((t, *m));
        while window.front().is_some_and(|(s, _)| *s < t - cfg.steady_window - eps) {
            window.pop_front();
        }
        if t + eps >= cfg.steady_window {
            variation = window.iter().map(|(_, r)| max_abs_diff(m, r)).fold(0.0, f64::max);
            if variation < cfg.steady_tol {
                detected = Some(t);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = violation {
        return Err(e);
    }
    match detected {
        Some(time) => {
            let rho = DensityMatrix::from_matrix_unchecked(work.slot(0));
            check_physical(time, rho.matrix())?;
            defects.record(rho.matrix());
            Ok(SteadyState { rho, time, variation, hierarchy: work, defects })
        }
        None => Err(HeomError::NotConverged {
            time: cfg.t_end,
            variation,
            detail: "windowed variation above tolerance".into(),
        }),
    }
}

/// Largest hierarchy accepted by [`steady_state_direct`].
pub const DIRECT_SOLVE_MAX_SLOTS: usize = 600;

/// Steady hierarchy from a dense linear solve of `G x = 0` with the trace of
/// the physical slot pinned to one. Cross-check for small hierarchies.
pub fn steady_state_direct(gen: &Generator) -> Result<SteadyState> {
    let slots = gen.slots();
    if slots > DIRECT_SOLVE_MAX_SLOTS {
        return Err(HeomError::ResourceLimit {
            depth: gen.depth(),
            slots: slots as u128,
            budget: DIRECT_SOLVE_MAX_SLOTS,
        });
    }
    let n = 4 * slots;
    let mut a: DMatrix<C64> = gen.to_dense();
    // replace d(rho_ee)/dt = 0 by tr(rho) = 1
    for c in 0..n {
        a[(0, c)] = C64::new(0.0, 0.0);
    }
    a[(0, 0)] = C64::new(1.0, 0.0);
    a[(0, 3)] = C64::new(1.0, 0.0);
    let mut b = DVector::zeros(n);
    b[0] = C64::new(1.0, 0.0);
    let x = a.lu().solve(&b).ok_or_else(|| HeomError::NotConverged {
        time: 0.0,
        variation: f64::INFINITY,
        detail: "singular steady-state system".into(),
    })?;
    let hierarchy = HierarchyState::from_vec(x.iter().copied().collect());
    let rho = DensityMatrix::from_matrix_unchecked(hierarchy.slot(0));
    let mut defects = Defects::default();
    defects.record(rho.matrix());
    Ok(SteadyState { rho, time: f64::NAN, variation: 0.0, hierarchy, defects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::assemble_generator;
    use crate::model::{Coupling, ModelParams, OuKind};

    #[test]
    fn initial_state_layout() {
        let gen = assemble_generator(&ModelParams::default().with_field(0.3, 0.4), 2).unwrap();
        let s = initial_state(&DensityMatrix::excited(), gen.layout());
        let nonzero = (0..s.slots()).filter(|&i| s.slot(i).norm() > 0.0).count();
        assert_eq!(nonzero, 1);
        assert_eq!(s.slot(0).trace(), C64::new(1.0, 0.0));
        assert!(initial_state_from_matrix(Mat2::identity(), gen.layout()).is_err());
    }

    #[test]
    fn free_evolution() {
        let gen = assemble_generator(&ModelParams::default(), 0).unwrap();
        let rho0 = Mat2::new(C64::from(0.6), C64::new(0.3, 0.1), C64::new(0.3, -0.1), C64::from(0.4));
        let s = initial_state_from_matrix(rho0, gen.layout()).unwrap();
        let cfg = PropagationConfig { t_end: 20.0, ..Default::default() };
        let tr = propagate(&gen, &s, &cfg).unwrap();
        for (t, r) in tr.times.iter().zip(&tr.physical_states) {
            assert!((r.excited_population() - 0.6).abs() < 1e-12);
            let expected = rho0[(0, 1)] * C64::new(0.0, -t).exp();
            assert!((r.coherence() - expected).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn dephasing_only_keeps_populations() {
        let p = ModelParams::default().with_field_source(OuKind::Omega, 0.6, 0.3);
        let gen = assemble_generator(&p, 8).unwrap();
        let rho0 = Mat2::new(C64::from(0.7), C64::from(0.2), C64::from(0.2), C64::from(0.3));
        let s = initial_state_from_matrix(rho0, gen.layout()).unwrap();
        let tr = propagate(&gen, &s, &PropagationConfig { t_end: 30.0, ..Default::default() }).unwrap();
        assert!(tr.populations().iter().all(|p| (p - 0.7).abs() < 1e-12));
        assert!(tr.coherences().last().unwrap().norm() < 0.2);
    }

    #[test]
    fn steady_state_requires_dissipation() {
        let gen = assemble_generator(&ModelParams::default(), 3).unwrap();
        let s = initial_state(&DensityMatrix::excited(), gen.layout());
        assert!(matches!(
            find_steady_state(&gen, &s, &PropagationConfig::default()),
            Err(HeomError::NotConverged { .. })
        ));
    }

    #[test]
    fn steady_state_matches_direct_solve_and_is_unique() {
        let p = ModelParams::default().with_field(0.3, 0.5).with_bath(0.4, 0.8, Coupling::Full);
        let gen = assemble_generator(&p, 3).unwrap();
        let cfg = PropagationConfig { t_end: 2000.0, sample_stride: 0.5, ..Default::default() };
        let from_up = find_steady_state(&gen, &initial_state(&DensityMatrix::excited(), gen.layout()), &cfg).unwrap();
        let from_down = find_steady_state(&gen, &initial_state(&DensityMatrix::ground(), gen.layout()), &cfg).unwrap();
        let diff = max_abs_diff(from_up.rho.matrix(), from_down.rho.matrix());
        assert!(diff < 10.0 * cfg.steady_tol, "{diff:e}");
        let direct = steady_state_direct(&gen).unwrap();
        let diff = max_abs_diff(from_up.rho.matrix(), direct.rho.matrix());
        assert!(diff < 1e-7, "{diff:e}");
    }

    #[test]
    fn not_converged_when_window_exceeds_horizon() {
        let p = ModelParams::default().with_bath(0.4, 0.8, Coupling::Rwa);
        let gen = assemble_generator(&p, 3).unwrap();
        let cfg = PropagationConfig { t_end: 5.0, ..Default::default() };
        let r = find_steady_state(&gen, &initial_state(&DensityMatrix::excited(), gen.layout()), &cfg);
        assert!(matches!(r, Err(HeomError::NotConverged { .. })));
    }

    #[test]
    fn tighter_tolerance_within_error_estimate() {
        let p = ModelParams::default().with_bath(0.8, 0.4, Coupling::Full).with_field(0.3, 0.4);
        let gen = assemble_generator(&p, 5).unwrap();
        let s = initial_state(&DensityMatrix::excited(), gen.layout());
        let base = PropagationConfig { t_end: 30.0, rel_tol: 1e-6, abs_tol: 1e-8, ..Default::default() };
        let half = PropagationConfig { rel_tol: 0.5e-6, ..base };
        let (a, b) = (propagate(&gen, &s, &base).unwrap(), propagate(&gen, &s, &half).unwrap());
        let worst = a.populations().iter().zip(b.populations()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < a.stats.error_estimate, "{worst:e} vs {:e}", a.stats.error_estimate);
    }

    #[test]
    fn sample_grid_includes_end() {
        assert_eq!(uniform_grid(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(uniform_grid(1.1, 0.5), vec![0.0, 0.5, 1.0, 1.1]);
    }
}
