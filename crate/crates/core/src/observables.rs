//! Reduced-state observables, the stationary two-time correlation function
//! and the emission spectrum.

use std::ops::ControlFlow;

use crate::error::{invalid, HeomError, Result};
use crate::hierarchy::{Generator, HierarchyState};
use crate::integrator::StepControl;
use crate::model::{sigma_minus, DensityMatrix, C64};
use crate::propagator::propagate_with;

pub fn excited_population(rho: &DensityMatrix) -> f64 {
    rho.excited_population()
}

/// `n` equally spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let h = (end - start) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { end } else { start + i as f64 * h }).collect()
        }
    }
}

pub const DEFAULT_TAU_MAX: f64 = 400.0;
pub const DEFAULT_TAU_POINTS: usize = 1 << 14;
pub const DEFAULT_OMEGA_MIN: f64 = -2.0;
pub const DEFAULT_OMEGA_MAX: f64 = 3.0;
pub const DEFAULT_OMEGA_POINTS: usize = 2000;

pub fn default_tau_grid() -> Vec<f64> {
    linspace(0.0, DEFAULT_TAU_MAX, DEFAULT_TAU_POINTS)
}

pub fn default_omega_grid() -> Vec<f64> {
    linspace(DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX, DEFAULT_OMEGA_POINTS)
}

/// `<sigma_+(t + tau) sigma_-(t)>` in the stationary regime.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub lags: Vec<f64>,
    pub values: Vec<C64>,
}

impl CorrelationSeries {
    pub fn new(lags: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        check_tau_grid(&lags)?;
        if values.len() != lags.len() {
            return Err(invalid("values", format!("{} values for {} lags", values.len(), lags.len())));
        }
        Ok(Self { lags, values })
    }

    pub fn at_zero(&self) -> C64 {
        self.values[0]
    }

    /// `|C(tau_max)| / |C(0)|`, zero for an identically vanishing series.
    pub fn tail_ratio(&self) -> f64 {
        let c0 = self.values[0].norm();
        if c0 == 0.0 {
            0.0
        } else {
            self.values.last().unwrap().norm() / c0
        }
    }
}

fn check_tau_grid(lags: &[f64]) -> Result<()> {
    if lags.is_empty() {
        return Err(HeomError::EmptyGrid("tau"));
    }
    if lags[0] != 0.0 {
        return Err(invalid("tau_grid", "must start at 0"));
    }
    if lags.windows(2).any(|w| w[1] <= w[0]) || !lags.iter().all(|t| t.is_finite()) {
        return Err(invalid("tau_grid", "must be finite and strictly increasing"));
    }
    Ok(())
}

/// Left-multiply every slot of the steady hierarchy by sigma_-, propagate
/// over `tau_grid` and record `tr(sigma_+ rho_0(tau))`.
pub fn two_time_correlation(
    gen: &Generator,
    steady: &HierarchyState,
    tau_grid: &[f64],
    control: &StepControl,
) -> Result<CorrelationSeries> {
    check_tau_grid(tau_grid)?;
    if steady.slots() != gen.slots() {
        return Err(HeomError::LayoutMismatch { expected: gen.slots(), found: steady.slots() });
    }
    let sm = sigma_minus();
    let mut work = HierarchyState::zeros(steady.slots());
    for i in 0..steady.slots() {
        work.set_slot(i, &(sm * steady.slot(i)));
    }
    let tau_end = *tau_grid.last().unwrap();
    let mut values = Vec::with_capacity(tau_grid.len());
    if tau_end == 0.0 {
        values.push(work.slot(0)[(1, 0)]);
    } else {
        // tr(sigma_+ X) picks the (1, 0) entry
        propagate_with(gen, &mut work, 0.0, tau_end, tau_grid, control, |_, m| {
            values.push(m[(1, 0)]);
            ControlFlow::Continue(())
        })?;
    }
    CorrelationSeries::new(tau_grid.to_vec(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub omegas: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Normalization constant: the unnormalized maximum.
    pub peak: f64,
    /// Most negative unnormalized value before clipping, relative to `peak`.
    pub clipped: f64,
}

pub const WINDOW_RATIO_LIMIT: f64 = 1e-6;
pub const NEGATIVE_LIMIT: f64 = 1e-3;

/// `S(w) = Re int_0^tau_max C(tau) exp(-i w tau) dtau` by the trapezoidal
/// rule, small negative lobes clipped, normalized to unit maximum.
pub fn emission_spectrum(corr: &CorrelationSeries, omega_grid: &[f64]) -> Result<SpectrumResult> {
    if omega_grid.is_empty() {
        return Err(HeomError::EmptyGrid("omega"));
    }
    check_tau_grid(&corr.lags)?;
    if corr.lags.len() < 2 {
        return Err(HeomError::EmptyGrid("tau needs at least two points"));
    }
    let ratio = corr.tail_ratio();
    if ratio >= WINDOW_RATIO_LIMIT {
        return Err(HeomError::WindowInadequate { ratio });
    }
    let weights: Vec<f64> = (0..corr.lags.len())
        .map(|i| {
            let left = if i > 0 { corr.lags[i] - corr.lags[i - 1] } else { 0.0 };
            let right = corr.lags.get(i + 1).map_or(0.0, |t| t - corr.lags[i]);
            0.5 * (left + right)
        })
        .collect();
    let raw: Vec<f64> = omega_grid
        .iter()
        .map(|&w| {
            corr.lags
                .iter()
                .zip(&corr.values)
                .zip(&weights)
                .map(|((&t, c), &h)| {
                    let (s, co) = (w * t).sin_cos();
                    h * (c.re * co + c.im * s)
                })
                .sum()
        })
        .collect();
    let peak = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let trough = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = raw.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(SpectrumResult { omegas: omega_grid.to_vec(), intensities: raw, peak: 0.0, clipped: 0.0 });
    }
    if peak <= 0.0 || trough < -NEGATIVE_LIMIT * peak {
        return Err(HeomError::WindowInadequate { ratio: -trough / peak.max(f64::MIN_POSITIVE) });
    }
    let intensities = raw.iter().map(|x| x.max(0.0) / peak).collect();
    Ok(SpectrumResult { omegas: omega_grid.to_vec(), intensities, peak, clipped: (trough / peak).min(0.0) })
}
