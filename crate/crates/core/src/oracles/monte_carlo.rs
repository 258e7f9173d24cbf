//! Ensemble average over exactly sampled Ornstein-Uhlenbeck realizations of
//! the stochastic field Hamiltonian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::model::{DensityMatrix, Mat2, ModelParams, OuKind, OuProcess, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_trajectories: usize,
    pub dt: f64,
    pub seed: u64,
    pub t_end: f64,
    /// Spacing of recorded samples, a multiple of `dt`.
    pub sample_stride: f64,
    /// Largest acceptable standard error; exceeding it sets a warning.
    pub target_stderr: Option<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_trajectories: 10_000, dt: 1e-3, seed: 0, t_end: 50.0, sample_stride: 0.5, target_stderr: None }
    }
}

impl McConfig {
    fn steps(&self) -> Result<(usize, usize)> {
        if self.n_trajectories == 0 {
            return Err(invalid("n_trajectories", "must be >= 1"));
        }
        for (name, v) in [("dt", self.dt), ("t_end", self.t_end), ("sample_stride", self.sample_stride)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let whole = |x: f64, name: &'static str| {
            let n = (x / self.dt).round();
            if n < 1.0 || (n * self.dt - x).abs() > 1e-9 * x {
                Err(invalid(name, format!("{x} is not a multiple of dt = {}", self.dt)))
            } else {
                Ok(n as usize)
            }
        };
        let total = whole(self.t_end, "t_end")?;
        let stride = whole(self.sample_stride, "sample_stride")?;
        if total % stride != 0 {
            return Err(invalid("sample_stride", "must divide t_end"));
        }
        Ok((total, stride))
    }
}

/// Exact discretization of a stationary OU process on the grid
/// `k dt`, `k = 0..=t_end/dt`.
struct OuSampler {
    decay: f64,
    kick: f64,
    rng: ChaCha8Rng,
    x: f64,
}

impl OuSampler {
    fn new(proc: &OuProcess, dt: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let var = proc.variance();
        let decay = (-proc.gamma * dt).exp();
        let kick = (var * -(-2.0 * proc.gamma * dt).exp_m1()).sqrt();
        let x = if var > 0.0 { var.sqrt() * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
        Self { decay, kick, rng, x }
    }

    fn advance(&mut self) -> f64 {
        if self.kick > 0.0 {
            let eta: f64 = self.rng.sample(StandardNormal);
            self.x = self.x * self.decay + self.kick * eta;
        }
        self.x
    }
}

pub fn sample_ou_path(proc: &OuProcess, cfg: &McConfig, stream: u64) -> Result<Vec<f64>> {
    let (total, _) = cfg.steps()?;
    let mut s = OuSampler::new(proc, cfg.dt, cfg.seed, stream);
    let mut out = Vec::with_capacity(total + 1);
    out.push(s.x);
    for _ in 0..total {
        out.push(s.advance());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub times: Vec<f64>,
    pub mean: Vec<Mat2>,
    /// Standard error of the mean; real and imaginary parts hold the errors
    /// of the real and imaginary parts of each entry.
    pub stderr: Vec<Mat2>,
    pub n_trajectories: usize,
    pub warning: Option<String>,
}

impl McResult {
    pub fn populations(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m[(0, 0)].re).collect()
    }

    pub fn population_stderr(&self) -> Vec<f64> {
        self.stderr.iter().map(|m| m[(0, 0)].re).collect()
    }

    pub fn coherences(&self) -> Vec<C64> {
        self.mean.iter().map(|m| m[(0, 1)]).collect()
    }

    pub fn coherence_stderr(&self) -> Vec<C64> {
        self.stderr.iter().map(|m| m[(0, 1)]).collect()
    }
}

/// Count, mean and summed squared deviation of the 8 real components per
/// sample, merged with the parallel update of Chan et al.
#[derive(Clone)]
struct Moments {
    count: f64,
    mean: Vec<[f64; 8]>,
    m2: Vec<[f64; 8]>,
}

fn components(m: &Mat2) -> [f64; 8] {
    let e = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
    std::array::from_fn(|k| if k % 2 == 0 { e[k / 2].re } else { e[k / 2].im })
}

impl Moments {
    fn single(samples: &[Mat2]) -> Self {
        Self {
            count: 1.0,
            mean: samples.iter().map(components).collect(),
            m2: vec![[0.0; 8]; samples.len()],
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        let n = self.count + other.count;
        let w = other.count / n;
        for i in 0..self.mean.len() {
            for k in 0..8 {
                let d = other.mean[i][k] - self.mean[i][k];
                self.mean[i][k] += d * w;
                self.m2[i][k] += other.m2[i][k] + d * d * self.count * w;
            }
        }
        self.count = n;
        self
    }
}

/// Fixed-shape tree reduction so the result does not depend on scheduling.
fn pairwise(mut parts: Vec<Moments>) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// `exp(-i H dt)` for a Hermitian 2x2 `H = [[h00, h01], [conj(h01), 0]]`.
fn step_unitary(h00: f64, h01: C64, dt: f64) -> Mat2 {
    let a = 0.5 * h00;
    let b = (a * a + h01.norm_sqr()).sqrt();
    let theta = b * dt;
    let sinc = if theta.abs() < 1e-8 { dt * (1.0 - theta * theta / 6.0) } else { theta.sin() / b };
    let (cos, phase) = (C64::from(theta.cos()), C64::new(0.0, -a * dt).exp());
    let mi = C64::new(0.0, -sinc);
    // H - a I = [[a, h01], [conj(h01), -a]]
    Mat2::new(cos + mi * a, mi * h01, mi * h01.conj(), cos - mi * a) * phase
}

const CHUNK: usize = 32;

/// Field-only ensemble average of `U(t) rho0 U(t)^dagger`.
pub fn monte_carlo_evolution(params: &ModelParams, rho0: &DensityMatrix, cfg: &McConfig) -> Result<McResult> {
    params.validate()?;
    if !params.bath.is_off() {
        return Err(invalid("bath", "Monte Carlo oracle covers the field only"));
    }
    let (total, stride) = cfg.steps()?;
    let procs = params.field.processes()?;
    let omega0 = params.tls.omega0;
    let n_samples = total / stride + 1;
    let rho0 = *rho0.matrix();

    let run_chunk = |chunk: usize| {
        let first = chunk * CHUNK;
        let mut parts = Vec::with_capacity(CHUNK);
        let mut samples = vec![rho0; n_samples];
        for traj in first..(first + CHUNK).min(cfg.n_trajectories) {
            let mut samplers: Vec<OuSampler> = OuKind::ALL
                .iter()
                .map(|k| OuSampler::new(&procs[k.index()], cfg.dt, cfg.seed, 3 * traj as u64 + k.index() as u64))
                .collect();
            let mut prev = [samplers[0].x, samplers[1].x, samplers[2].x];
            let mut u = Mat2::identity();
            for step in 1..=total {
                let next = [samplers[0].advance(), samplers[1].advance(), samplers[2].advance()];
                let mid = |k: usize| 0.5 * (prev[k] + next[k]);
                u = step_unitary(omega0 + mid(0), C64::new(mid(1), mid(2)), cfg.dt) * u;
                prev = next;
                if step % stride == 0 {
                    samples[step / stride] = u * rho0 * u.adjoint();
                }
            }
            parts.push(Moments::single(&samples));
        }
        pairwise(parts)
    };

    let n_chunks = cfg.n_trajectories.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    let parts: Vec<Moments> = {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(run_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Moments> = (0..n_chunks).map(run_chunk).collect();
    let total_moments = pairwise(parts);

    let n = cfg.n_trajectories as f64;
    let mut mean = Vec::with_capacity(n_samples);
    let mut stderr = Vec::with_capacity(n_samples);
    let mut worst: f64 = 0.0;
    for (m, q) in total_moments.mean.iter().zip(&total_moments.m2) {
        let mut e = [0.0; 8];
        for k in 0..8 {
            e[k] = if cfg.n_trajectories > 1 { (q[k] / (n - 1.0) / n).sqrt() } else { f64::INFINITY };
            worst = worst.max(e[k]);
        }
        let pack = |v: &[f64; 8]| {
            Mat2::new(C64::new(v[0], v[1]), C64::new(v[2], v[3]), C64::new(v[4], v[5]), C64::new(v[6], v[7]))
        };
        mean.push(pack(m));
        stderr.push(pack(&e));
    }
    let warning = cfg.target_stderr.filter(|&target| worst > target).map(|target| {
        format!(
            "largest standard error {worst:.3e} exceeds target {target:.3e}; about {} trajectories needed",
            (n * (worst / target).powi(2)).ceil()
        )
    });
    let times = (0..n_samples).map(|i| (i * stride) as f64 * cfg.dt).collect();
    Ok(McResult { times, mean, stderr, n_trajectories: cfg.n_trajectories, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::ou_dephasing_coherence;

    #[test]
    fn unitary_step() {
        let (h00, h01, dt) = (1.3, C64::new(0.4, -0.7), 0.37);
        let u = step_unitary(h00, h01, dt);
        assert!((u * u.adjoint() - Mat2::identity()).norm() < 1e-14);
        // compare with a Taylor series of exp(-i H dt)
        let h = Mat2::new(C64::from(h00), h01, h01.conj(), C64::from(0.0));
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for k in 1..40 {
            term = term * h * C64::new(0.0, -dt / k as f64);
            sum += term;
        }
        assert!((u - sum).norm() < 1e-14);
        assert!((step_unitary(0.0, C64::from(0.0), dt) - Mat2::identity()).norm() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = McConfig { t_end: 1.0, sample_stride: 0.1, dt: 0.01, ..Default::default() };
        assert!(ok.steps().is_ok());
        assert!(McConfig { n_trajectories: 0, ..ok }.steps().is_err());
        assert!(McConfig { dt: 0.0, ..ok }.steps().is_err());
        assert!(McConfig { sample_stride: 0.015, ..ok }.steps().is_err());
        assert!(McConfig { sample_stride: 0.3, ..ok }.steps().is_err());
    }

    #[test]
    fn zero_delta_path_is_zero() {
        let p = OuProcess::new(OuKind::Xi1, 0.0, 0.4).unwrap();
        let cfg = McConfig { t_end: 1.0, dt: 0.01, sample_stride: 0.01, ..Default::default() };
        assert!(sample_ou_path(&p, &cfg, 3).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_streams() {
        let p = OuProcess::new(OuKind::Xi1, 0.5, 0.4).unwrap();
        let cfg = McConfig { t_end: 1.0, dt: 0.01, sample_stride: 0.01, seed: 11, ..Default::default() };
        let a = sample_ou_path(&p, &cfg, 5).unwrap();
        assert_eq!(a, sample_ou_path(&p, &cfg, 5).unwrap());
        assert_ne!(a, sample_ou_path(&p, &cfg, 6).unwrap());
        assert_ne!(a, sample_ou_path(&p, &McConfig { seed: 12, ..cfg }, 5).unwrap());
    }

    #[test]
    fn free_evolution_when_field_off() {
        let rho0 = DensityMatrix::new(Mat2::new(C64::from(0.5), C64::from(0.5), C64::from(0.5), C64::from(0.5))).unwrap();
        let cfg = McConfig { n_trajectories: 3, t_end: 2.0, dt: 0.01, sample_stride: 0.5, ..Default::default() };
        let r = monte_carlo_evolution(&ModelParams::default(), &rho0, &cfg).unwrap();
        for (t, c) in r.times.iter().zip(r.coherences()) {
            assert!((c - 0.5 * C64::new(0.0, -t).exp()).norm() < 1e-12);
        }
        assert!(r.stderr.iter().all(|e| e.norm() < 1e-12));
    }

    #[test]
    fn rejects_bath() {
        let p = ModelParams::default().with_bath(0.3, 0.3, crate::model::Coupling::Full);
        assert!(monte_carlo_evolution(&p, &DensityMatrix::excited(), &McConfig::default()).is_err());
    }

    #[test]
    fn dephasing_matches_envelope() {
        let p = ModelParams::default().with_field_source(OuKind::Omega, 0.6, 0.5);
        let rho0 = DensityMatrix::new(Mat2::new(C64::from(0.5), C64::from(0.5), C64::from(0.5), C64::from(0.5))).unwrap();
        let cfg = McConfig { n_trajectories: 2000, t_end: 8.0, dt: 0.01, sample_stride: 1.0, seed: 3, target_stderr: Some(1e-5) };
        let r = monte_carlo_evolution(&p, &rho0, &cfg).unwrap();
        assert!(r.warning.is_some());
        let proc = p.field.process(OuKind::Omega).unwrap();
        for ((t, c), e) in r.times.iter().zip(r.coherences()).zip(r.coherence_stderr()) {
            let env = 0.5 * ou_dephasing_coherence(*t, &proc).unwrap();
            let expected = env * C64::new(0.0, -t).exp();
            let se = e.re.hypot(e.im);
            assert!((c - expected).norm() <= 3.0 * se + 1e-12, "t={t}: {c} vs {expected} (se {se})");
            assert!((r.populations()[0] - 0.5).abs() < 1e-15);
        }
    }
}
