//! Markovian master equation with rates taken from the flat (white-noise)
//! limit of each field process and the bath spectral density at the qubit
//! frequency.

use nalgebra::Vector4;

use crate::error::{HeomError, Result};
use crate::model::{
    sigma_minus, sigma_plus, DensityMatrix, Mat2, Mat4, ModelParams, OuKind, Side, Superop, SuperopTerm, C64, I,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladRates {
    /// Rate of `D[sigma_-]` from the bath.
    pub bath: f64,
    /// Rates of `D[V]` for the Omega, xi1 and xi2 coupling operators.
    pub field: [f64; 3],
}

impl LindbladRates {
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let procs = params.field.processes()?;
        let field = procs.map(|p| 2.0 * p.variance() / p.gamma);
        let bath = if params.bath.is_off() { 0.0 } else { 2.0 * params.bath.amplitude() / params.bath.gamma_b };
        Ok(Self { bath, field })
    }

    pub fn dephasing(&self) -> f64 {
        self.field[OuKind::Omega.index()]
    }

    /// Decay rate of the coherence when the two transverse field rates are
    /// equal.
    pub fn coherence_decay(&self) -> f64 {
        let (x1, x2) = (self.field[1], self.field[2]);
        0.5 * self.bath + (x1 + x2) + 0.5 * self.dephasing()
    }
}

/// Row-major vectorized Liouvillian `vec(rho) = (r00, r01, r10, r11)`.
pub fn liouvillian(params: &ModelParams) -> Result<Mat4> {
    let rates = LindbladRates::from_params(params)?;
    let mut generator = Superop::single(Side::Commutator, params.tls.hamiltonian(), -I);
    let mut jumps = vec![(sigma_minus(), rates.bath)];
    jumps.extend(OuKind::ALL.map(|kind| (kind.coupling_operator(), rates.field[kind.index()])));
    let mut sandwich = Mat4::zeros();
    for (l, rate) in jumps.into_iter().filter(|(_, r)| *r > 0.0) {
        let ld = l.adjoint();
        let half = C64::from(-0.5 * rate);
        generator.terms.push(SuperopTerm { side: Side::Left, operator: ld * l, scalar: half });
        generator.terms.push(SuperopTerm { side: Side::Right, operator: ld * l, scalar: half });
        // (L rho L^dag)_rc = L_rk rho_kq Ldag_qc
        for r in 0..2 {
            for c in 0..2 {
                for k in 0..2 {
                    for q in 0..2 {
                        sandwich[(2 * r + c, 2 * k + q)] += C64::from(rate) * l[(r, k)] * ld[(q, c)];
                    }
                }
            }
        }
    }
    Ok(generator.matrix() + sandwich)
}

fn vec_of(m: &Mat2) -> Vector4<C64> {
    Vector4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

fn mat_of(v: &Vector4<C64>) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

/// Exact propagation `exp(L t) rho0` at each time in `t_grid`.
pub fn lindblad_evolution(params: &ModelParams, rho0: &DensityMatrix, t_grid: &[f64]) -> Result<Vec<DensityMatrix>> {
    let l = liouvillian(params)?;
    let v0 = vec_of(rho0.matrix());
    t_grid
        .iter()
        .map(|&t| {
            let m = mat_of(&((l * C64::from(t)).exp() * v0));
            DensityMatrix::with_tolerance(m, 1e-10)
        })
        .collect()
}

pub fn lindblad_steady_state(params: &ModelParams) -> Result<DensityMatrix> {
    let mut l = liouvillian(params)?;
    // the first row (d rho_00 / dt) is replaced by the trace condition
    for c in 0..4 {
        l[(0, c)] = C64::from(0.0);
    }
    l[(0, 0)] = C64::from(1.0);
    l[(0, 3)] = C64::from(1.0);
    let b = Vector4::new(C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from(0.0));
    let x = l.lu().solve(&b).ok_or_else(|| HeomError::NotConverged {
        time: 0.0,
        variation: f64::INFINITY,
        detail: "Lindblad steady state is not unique".into(),
    })?;
    DensityMatrix::with_tolerance(mat_of(&x), 1e-10)
}

/// Stationary `<sigma_+(tau) sigma_-(0)>` by the quantum regression theorem.
pub fn lindblad_correlation(params: &ModelParams, tau_grid: &[f64]) -> Result<Vec<C64>> {
    let l = liouvillian(params)?;
    let rho = lindblad_steady_state(params)?;
    let v0 = vec_of(&(sigma_minus() * rho.matrix()));
    let sp = sigma_plus();
    Ok(tau_grid
        .iter()
        .map(|&t| (sp * mat_of(&((l * C64::from(t)).exp() * v0))).trace())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Coupling;

    #[test]
    fn rates() {
        let p = ModelParams::default().with_field(0.4, 0.2).with_bath(0.4, 0.8, Coupling::Full);
        let r = LindbladRates::from_params(&p).unwrap();
        assert!((r.bath - 2.0 * 0.16).abs() < 1e-14);
        assert!(r.field.iter().all(|&x| (x - 2.0 * 0.16 / 0.2).abs() < 1e-12));
    }

    #[test]
    fn free_evolution_without_couplings() {
        let rho0 = DensityMatrix::new(Mat2::new(
            C64::from(0.5),
            C64::new(0.2, 0.1),
            C64::new(0.2, -0.1),
            C64::from(0.5),
        ))
        .unwrap();
        let ts = [0.0, 1.0, 7.5];
        let out = lindblad_evolution(&ModelParams::default(), &rho0, &ts).unwrap();
        for (t, r) in ts.iter().zip(&out) {
            assert!((r.coherence() - C64::new(0.2, 0.1) * C64::new(0.0, -t).exp()).norm() < 1e-12);
            assert!((r.excited_population() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn steady_states() {
        let bath = ModelParams::default().with_bath(0.4, 0.8, Coupling::Full);
        assert!(lindblad_steady_state(&bath).unwrap().excited_population().abs() < 1e-12);
        let field = ModelParams::default().with_field(0.3, 0.5);
        assert!((lindblad_steady_state(&field).unwrap().excited_population() - 0.5).abs() < 1e-12);
        let both = ModelParams::default().with_field(0.4, 0.2).with_bath(0.4, 0.8, Coupling::Full);
        let r = LindbladRates::from_params(&both).unwrap();
        let gf = r.field[1] + r.field[2];
        let expected = gf / (2.0 * gf + r.bath);
        assert!((lindblad_steady_state(&both).unwrap().excited_population() - expected).abs() < 1e-12);
        assert!(lindblad_steady_state(&ModelParams::default()).is_err());
    }

    #[test]
    fn trace_hermiticity_positivity() {
        let p = ModelParams::default().with_field(0.5, 0.3).with_bath(0.6, 0.2, Coupling::Rwa);
        let rho0 = DensityMatrix::new(Mat2::new(C64::from(0.9), C64::new(0.3, 0.0), C64::new(0.3, 0.0), C64::from(0.1))).unwrap();
        let ts: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
        assert_eq!(lindblad_evolution(&p, &rho0, &ts).unwrap().len(), 100);
    }

    #[test]
    fn correlation_is_damped_rotation() {
        let p = ModelParams::default().with_field(0.3, 0.4).with_bath(0.5, 0.6, Coupling::Full);
        let r = LindbladRates::from_params(&p).unwrap();
        let ss = lindblad_steady_state(&p).unwrap().excited_population();
        let ts = [0.0, 0.5, 3.0, 10.0];
        for (t, c) in ts.iter().zip(lindblad_correlation(&p, &ts).unwrap()) {
            let expected = ss * C64::new(-r.coherence_decay() * t, *t).exp();
            assert!((c - expected).norm() < 1e-12, "{t}: {c} vs {expected}");
        }
    }
}
