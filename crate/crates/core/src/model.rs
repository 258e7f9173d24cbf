//! Model definition: the two-level system, the three Ornstein-Uhlenbeck field
//! processes, the Lorentzian bath, and the coefficient table that drives the
//! hierarchy.
//!
//! Units: hbar = 1 and frequencies are expressed in units of the qubit
//! frequency. The basis ordering is fixed everywhere: index 0 is the excited
//! state, index 1 the ground state, so `sigma_plus * sigma_minus = diag(1, 0)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{invalid, HeomError, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Raising operator `|e><g|`.
pub fn sigma_plus() -> Mat2 {
    Mat2::new(ZERO, ONE, ZERO, ZERO)
}

/// Lowering operator `|g><e|`.
pub fn sigma_minus() -> Mat2 {
    Mat2::new(ZERO, ZERO, ONE, ZERO)
}

/// Excited-state projector `sigma_plus * sigma_minus`.
pub fn excited_projector() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, ZERO)
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsParams {
    pub omega0: f64,
}

impl TlsParams {
    pub fn new(omega0: f64) -> Result<Self> {
        check_positive("omega0", omega0)?;
        Ok(Self { omega0 })
    }

    pub fn hamiltonian(&self) -> Mat2 {
        excited_projector() * C64::from(self.omega0)
    }
}

/// Which of the three field processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OuKind {
    Omega,
    Xi1,
    Xi2,
}

impl OuKind {
    pub const ALL: [OuKind; 3] = [OuKind::Omega, OuKind::Xi1, OuKind::Xi2];

    pub fn index(self) -> usize {
        match self {
            OuKind::Omega => 0,
            OuKind::Xi1 => 1,
            OuKind::Xi2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OuKind::Omega => "omega",
            OuKind::Xi1 => "xi1",
            OuKind::Xi2 => "xi2",
        }
    }

    /// Operator the process multiplies in the field Hamiltonian.
    pub fn coupling_operator(self) -> Mat2 {
        match self {
            OuKind::Omega => excited_projector(),
            OuKind::Xi1 => sigma_plus() + sigma_minus(),
            OuKind::Xi2 => (sigma_plus() - sigma_minus()) * I,
        }
    }
}

/// A stationary Ornstein-Uhlenbeck process with correlation
/// `<x(t) x(t')> = (delta^2 / gamma) exp(-gamma |t - t'|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuProcess {
    pub kind: OuKind,
    pub delta: f64,
    pub gamma: f64,
}

impl OuProcess {
    pub fn new(kind: OuKind, delta: f64, gamma: f64) -> Result<Self> {
        check_non_negative("delta", delta)?;
        check_positive("gamma", gamma)?;
        Ok(Self { kind, delta, gamma })
    }

    /// Stationary variance, i.e. the correlation at zero lag.
    pub fn variance(&self) -> f64 {
        self.delta * self.delta / self.gamma
    }

    pub fn correlation(&self, lag: f64) -> f64 {
        ou_correlation(lag, self)
    }
}

pub fn ou_correlation(lag: f64, proc: &OuProcess) -> f64 {
    proc.variance() * (-proc.gamma * lag.abs()).exp()
}

/// How the user-facing field strength `delta` maps onto the process variance.
///
/// `Printed` takes the hierarchy coefficients at face value: the first-tier
/// product is `delta^2`, so the represented process has zero-lag correlation
/// `delta^2`. `EqThree` reads `delta` as the parameter of the correlation
/// function `(delta^2/gamma) exp(-gamma|t|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldConvention {
    #[default]
    Printed,
    EqThree,
}

impl FieldConvention {
    pub fn name(self) -> &'static str {
        match self {
            FieldConvention::Printed => "printed",
            FieldConvention::EqThree => "eq-three",
        }
    }
}

/// Strength and cutoff of one field process as quoted in parameter studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSource {
    pub delta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    /// Ordered as `OuKind::ALL`.
    pub sources: [FieldSource; 3],
    pub convention: FieldConvention,
}

impl FieldParams {
    pub fn off() -> Self {
        Self::uniform(0.0, 1.0)
    }

    /// All three processes share strength and cutoff.
    pub fn uniform(delta: f64, gamma: f64) -> Self {
        let s = FieldSource { delta, gamma };
        Self { sources: [s; 3], convention: FieldConvention::default() }
    }

    pub fn source(&self, kind: OuKind) -> FieldSource {
        self.sources[kind.index()]
    }

    /// The Ornstein-Uhlenbeck process actually represented for `kind`.
    pub fn process(&self, kind: OuKind) -> Result<OuProcess> {
        let s = self.source(kind);
        let delta = match self.convention {
            FieldConvention::Printed => s.delta * s.gamma.max(0.0).sqrt(),
            FieldConvention::EqThree => s.delta,
        };
        OuProcess::new(kind, delta, s.gamma)
    }

    pub fn processes(&self) -> Result<[OuProcess; 3]> {
        Ok([
            self.process(OuKind::Omega)?,
            self.process(OuKind::Xi1)?,
            self.process(OuKind::Xi2)?,
        ])
    }

    pub fn is_off(&self) -> bool {
        self.sources.iter().all(|s| s.delta == 0.0)
    }
}

/// Form of the qubit-bath interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    Rwa,
    #[default]
    Full,
}

impl Coupling {
    pub fn name(self) -> &'static str {
        match self {
            Coupling::Rwa => "rwa",
            Coupling::Full => "full",
        }
    }
}

/// Normalization of the bath correlation amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeConvention {
    /// Fourier transform of the Lorentzian: amplitude `delta_b^2 * gamma_b`.
    #[default]
    EqFiveFourier,
    /// Amplitude `delta_b^2`.
    BareDeltaSquared,
}

impl AmplitudeConvention {
    pub fn name(self) -> &'static str {
        match self {
            AmplitudeConvention::EqFiveFourier => "eq-five-fourier",
            AmplitudeConvention::BareDeltaSquared => "bare-delta-squared",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    pub delta_b: f64,
    pub gamma_b: f64,
    pub coupling: Coupling,
    pub amplitude_convention: AmplitudeConvention,
}

impl BathParams {
    pub fn new(delta_b: f64, gamma_b: f64, coupling: Coupling) -> Result<Self> {
        let b = Self {
            delta_b,
            gamma_b,
            coupling,
            amplitude_convention: AmplitudeConvention::default(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn off() -> Self {
        Self {
            delta_b: 0.0,
            gamma_b: 1.0,
            coupling: Coupling::Full,
            amplitude_convention: AmplitudeConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("delta_b", self.delta_b)?;
        check_positive("gamma_b", self.gamma_b)
    }

    /// Zero-lag value of the bath correlation function.
    pub fn amplitude(&self) -> f64 {
        let d2 = self.delta_b * self.delta_b;
        match self.amplitude_convention {
            AmplitudeConvention::EqFiveFourier => d2 * self.gamma_b,
            AmplitudeConvention::BareDeltaSquared => d2,
        }
    }

    /// Scale of the lift superoperators; `lambda * delta_b^2 / 2 == amplitude`.
    pub fn lambda(&self) -> f64 {
        match self.amplitude_convention {
            AmplitudeConvention::EqFiveFourier => 2.0 * self.gamma_b,
            AmplitudeConvention::BareDeltaSquared => 2.0,
        }
    }

    pub fn is_off(&self) -> bool {
        self.delta_b == 0.0
    }
}

/// Lorentzian spectral density centred on the qubit frequency.
pub fn lorentzian_spectral_density(omega: f64, omega0: f64, bath: &BathParams) -> f64 {
    let d2 = bath.delta_b * bath.delta_b;
    let g2 = bath.gamma_b * bath.gamma_b;
    let w = omega - omega0;
    d2 * g2 / (PI * (w * w + g2))
}

/// Zero-temperature bath correlation `A exp(-(gamma_b + i omega0) lag)`.
pub fn bath_correlation(lag: f64, omega0: f64, bath: &BathParams) -> Result<C64> {
    if lag.is_nan() || lag < 0.0 {
        return Err(invalid("lag", format!("must be >= 0, got {lag}")));
    }
    let exponent = -C64::new(bath.gamma_b, omega0) * lag;
    Ok(exponent.exp() * bath.amplitude())
}

/// System operator `a` entering the bath interaction.
pub fn coupling_operator(coupling: Coupling) -> Mat2 {
    match coupling {
        Coupling::Full => sigma_plus() + sigma_minus(),
        Coupling::Rwa => sigma_minus(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub tls: TlsParams,
    pub field: FieldParams,
    pub bath: BathParams,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { tls: TlsParams { omega0: 1.0 }, field: FieldParams::off(), bath: BathParams::off() }
    }
}

impl ModelParams {
    pub fn with_field(mut self, delta: f64, gamma: f64) -> Self {
        let convention = self.field.convention;
        self.field = FieldParams::uniform(delta, gamma);
        self.field.convention = convention;
        self
    }

    pub fn with_field_source(mut self, kind: OuKind, delta: f64, gamma: f64) -> Self {
        self.field.sources[kind.index()] = FieldSource { delta, gamma };
        self
    }

    pub fn with_field_convention(mut self, convention: FieldConvention) -> Self {
        self.field.convention = convention;
        self
    }

    pub fn with_bath(mut self, delta_b: f64, gamma_b: f64, coupling: Coupling) -> Self {
        self.bath.delta_b = delta_b;
        self.bath.gamma_b = gamma_b;
        self.bath.coupling = coupling;
        self
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.bath.coupling = coupling;
        self
    }

    pub fn with_amplitude_convention(mut self, convention: AmplitudeConvention) -> Self {
        self.bath.amplitude_convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("omega0", self.tls.omega0)?;
        for (kind, s) in OuKind::ALL.iter().zip(self.field.sources.iter()) {
            check_non_negative("field.delta", s.delta).map_err(|e| rename(e, kind))?;
            check_positive("field.gamma", s.gamma).map_err(|e| rename(e, kind))?;
        }
        self.bath.validate()
    }

    pub fn has_dissipation(&self) -> bool {
        !(self.field.is_off() && self.bath.is_off())
    }
}

fn rename(e: HeomError, kind: &OuKind) -> HeomError {
    match e {
        HeomError::InvalidParameter { name, reason } => HeomError::InvalidParameter {
            name,
            reason: format!("{} process: {reason}", kind.name()),
        },
        other => other,
    }
}

/// Physical (trace-one, Hermitian, positive) qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    pub const TOLERANCE: f64 = 1e-8;

    pub fn new(m: Mat2) -> Result<Self> {
        Self::with_tolerance(m, Self::TOLERANCE)
    }

    pub fn with_tolerance(m: Mat2, tol: f64) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HeomError::InvalidDensityMatrix("non-finite entry".into()));
        }
        let trace_defect = trace_defect(&m);
        if trace_defect > tol {
            return Err(HeomError::InvalidDensityMatrix(format!("trace defect {trace_defect:e}")));
        }
        let herm = hermiticity_defect(&m);
        if herm > tol {
            return Err(HeomError::InvalidDensityMatrix(format!("hermiticity defect {herm:e}")));
        }
        let min_eig = hermitian_eigenvalues(&m).0;
        if min_eig < -tol {
            return Err(HeomError::InvalidDensityMatrix(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(m))
    }

    /// Wrap without checks; used for averaged or intermediate states.
    pub fn from_matrix_unchecked(m: Mat2) -> Self {
        Self(m)
    }

    pub fn excited() -> Self {
        Self(excited_projector())
    }

    pub fn ground() -> Self {
        Self(Mat2::new(ZERO, ZERO, ZERO, ONE))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat2::identity() * C64::from(0.5))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn excited_population(&self) -> f64 {
        self.0[(0, 0)].re
    }

    /// Excited-ground coherence `rho_01`.
    pub fn coherence(&self) -> C64 {
        self.0[(0, 1)]
    }
}

pub fn trace_defect(m: &Mat2) -> f64 {
    (m.trace() - ONE).norm()
}

pub fn hermiticity_defect(m: &Mat2) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues `(low, high)` of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
    let mean = 0.5 * (a + d);
    let half = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mean - half, mean + half)
}

/// Which side a superoperator term acts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Commutator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperopTerm {
    pub side: Side,
    pub operator: Mat2,
    pub scalar: C64,
}

/// Linear map on 2x2 matrices written as a sum of one-sided or commutator
/// actions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Superop {
    pub terms: Vec<SuperopTerm>,
}

impl Superop {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn single(side: Side, operator: Mat2, scalar: C64) -> Self {
        Self { terms: vec![SuperopTerm { side, operator, scalar }] }
    }

    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        self.terms.iter().fold(Mat2::zeros(), |acc, t| {
            let v = match t.side {
                Side::Left => t.operator * rho,
                Side::Right => rho * t.operator,
                Side::Commutator => t.operator * rho - rho * t.operator,
            };
            acc + v * t.scalar
        })
    }

    /// Matrix acting on row-major vectorized states `(r00, r01, r10, r11)`.
    pub fn matrix(&self) -> Mat4 {
        let mut out = Mat4::zeros();
        for t in &self.terms {
            let a = &t.operator;
            let (left, right) = match t.side {
                Side::Left => (ONE, ZERO),
                Side::Right => (ZERO, ONE),
                Side::Commutator => (ONE, -ONE),
            };
            let mut m = Mat4::zeros();
            for r in 0..2 {
                for c in 0..2 {
                    for k in 0..2 {
                        // (A rho)_rc = A_rk rho_kc, (rho A)_rc = rho_rk A_kc
                        m[(2 * r + c, 2 * k + c)] += left * a[(r, k)];
                        m[(2 * r + c, 2 * r + k)] += right * a[(k, c)];
                    }
                }
            }
            out += m * t.scalar;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.scalar == ZERO || t.operator.iter().all(|z| *z == ZERO))
    }
}

/// One hierarchy direction: decay constant and the lift/drop superoperators.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub label: &'static str,
    pub alpha: C64,
    /// Couples slot `m` to `m + e_k`.
    pub lift: Superop,
    /// Couples slot `m` to `m - e_k`, multiplied by `m_k`.
    pub drop: Superop,
    /// False when the corresponding coupling strength is zero; such a
    /// direction is removed from the hierarchy.
    pub active: bool,
}

pub const N_DIRECTIONS: usize = 5;

/// Directions ordered `(omega, xi1, xi2, bath-k1, bath-k2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub directions: [Direction; N_DIRECTIONS],
}

impl CouplingTable {
    pub fn active_mask(&self) -> [bool; N_DIRECTIONS] {
        std::array::from_fn(|k| self.directions[k].active)
    }
}

pub fn build_coupling_table(params: &ModelParams) -> Result<CouplingTable> {
    params.validate()?;
    let field = params.field.processes()?;
    let field_dir = |p: &OuProcess| {
        let label = p.kind.name();
        let amp = p.variance().sqrt();
        let phi = Superop::single(Side::Commutator, p.kind.coupling_operator(), -I * amp);
        Direction {
            label,
            alpha: C64::from(-p.gamma),
            lift: phi.clone(),
            drop: phi,
            active: amp > 0.0,
        }
    };

    let bath = &params.bath;
    let omega0 = params.tls.omega0;
    let c1 = coupling_operator(bath.coupling);
    let c2 = c1.adjoint();
    let bath_active = !bath.is_off();
    let lambda = C64::from(if bath_active { bath.lambda() } else { 0.0 });
    let half_d2 = C64::from(0.5 * bath.delta_b * bath.delta_b);
    let k1 = Direction {
        label: "bath-k1",
        alpha: -C64::new(bath.gamma_b, -omega0),
        lift: Superop::single(Side::Commutator, c1, -lambda),
        drop: Superop::single(Side::Right, c2, -half_d2),
        active: bath_active,
    };
    let k2 = Direction {
        label: "bath-k2",
        alpha: -C64::new(bath.gamma_b, omega0),
        lift: Superop::single(Side::Commutator, c2, -lambda),
        drop: Superop::single(Side::Left, c1, half_d2),
        active: bath_active,
    };
    Ok(CouplingTable {
        directions: [field_dir(&field[0]), field_dir(&field[1]), field_dir(&field[2]), k1, k2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spectral_density_values() {
        let bath = BathParams::new(0.6, 0.3, Coupling::Full).unwrap();
        let peak = 0.36 / PI;
        assert!(close(lorentzian_spectral_density(1.0, 1.0, &bath), peak, 1e-15));
        assert!(close(lorentzian_spectral_density(1.3, 1.0, &bath), peak / 2.0, 1e-15));
        assert!(close(lorentzian_spectral_density(0.7, 1.0, &bath), peak / 2.0, 1e-15));
    }

    #[test]
    fn spectral_density_integrates_to_amplitude() {
        // Substitution w - w0 = g tan(t) maps the real line onto (-pi/2, pi/2).
        let bath = BathParams::new(0.4, 0.8, Coupling::Full).unwrap();
        let n = 20_000;
        let h = PI / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let t = -PI / 2.0 + (i as f64 + 0.5) * h;
            let w = 1.0 + bath.gamma_b * t.tan();
            let jac = bath.gamma_b / t.cos().powi(2);
            sum += lorentzian_spectral_density(w, 1.0, &bath) * jac * h;
        }
        assert!(close(sum, 0.16 * 0.8, 1e-9), "{sum}");
    }

    #[test]
    fn ou_correlation_values() {
        // Delta^2 = 0.4, gamma = 0.2
        let p = OuProcess::new(OuKind::Omega, 0.4f64.sqrt(), 0.2).unwrap();
        assert!(close(ou_correlation(0.0, &p), 2.0, 1e-12));
        assert!(close(ou_correlation(5.0, &p), 2.0 * (-1.0f64).exp(), 1e-12));
        assert!(close(ou_correlation(-5.0, &p), ou_correlation(5.0, &p), 0.0));
        assert!(ou_correlation(1e4, &p) < 1e-300);
    }

    #[test]
    fn ou_rejects_zero_gamma() {
        assert!(OuProcess::new(OuKind::Xi1, 0.1, 0.0).is_err());
        assert!(OuProcess::new(OuKind::Xi1, -0.1, 1.0).is_err());
        assert!(OuProcess::new(OuKind::Xi1, 0.0, 1.0).is_ok());
    }

    #[test]
    fn bath_correlation_conventions() {
        let mut bath = BathParams::new(0.5, 0.4, Coupling::Rwa).unwrap();
        let c0 = bath_correlation(0.0, 1.0, &bath).unwrap();
        assert!(close(c0.re, 0.25 * 0.4, 1e-15) && c0.im == 0.0);
        let ratio = bath_correlation(2.5, 1.0, &bath).unwrap().norm() / c0.norm();
        assert!(close(ratio, (-0.4f64 * 2.5).exp(), 1e-14));
        bath.amplitude_convention = AmplitudeConvention::BareDeltaSquared;
        assert!(close(bath_correlation(0.0, 1.0, &bath).unwrap().re, 0.25, 1e-15));
        assert!(bath_correlation(-1.0, 1.0, &bath).is_err());
    }

    #[test]
    fn bath_correlation_is_fourier_transform_of_density() {
        // C(t) = int J(w) exp(-i w t) dw, quadrature in the tan substitution
        let bath = BathParams::new(0.5, 0.3, Coupling::Full).unwrap();
        let n = 200_000;
        let h = PI / n as f64;
        for &t in &[0.0, 0.7, 2.0] {
            let mut sum = C64::new(0.0, 0.0);
            for i in 0..n {
                let s = -PI / 2.0 + (i as f64 + 0.5) * h;
                let w = 1.0 + bath.gamma_b * s.tan();
                let jac = bath.gamma_b / s.cos().powi(2);
                sum += C64::from_polar(lorentzian_spectral_density(w, 1.0, &bath) * jac * h, -w * t);
            }
            let exact = bath_correlation(t, 1.0, &bath).unwrap();
            // oscillatory tail converges slowly for t > 0
            let tol = if t == 0.0 { 1e-9 } else { 2e-3 };
            assert!((sum - exact).norm() < tol, "t={t}: {sum} vs {exact}");
        }
    }

    #[test]
    fn coupling_operators() {
        let rwa = coupling_operator(Coupling::Rwa);
        assert_eq!(rwa.iter().filter(|z| **z != ZERO).count(), 1);
        assert_eq!(rwa[(1, 0)], ONE);
        let full = coupling_operator(Coupling::Full);
        assert_eq!(hermiticity_defect(&full), 0.0);
        assert_eq!(full.trace(), ZERO);
        let (lo, hi) = hermitian_eigenvalues(&full);
        assert!(close(lo, -1.0, 1e-15) && close(hi, 1.0, 1e-15));
        assert_eq!(full - rwa, sigma_plus());
    }

    #[test]
    fn superop_matrix_matches_apply() {
        let a = Mat2::new(C64::new(0.3, 0.1), C64::new(-1.0, 0.5), C64::new(0.2, -0.7), C64::new(0.9, 0.0));
        let rho = Mat2::new(C64::new(0.1, 0.2), C64::new(0.4, -0.3), C64::new(-0.5, 0.6), C64::new(0.7, 0.8));
        for side in [Side::Left, Side::Right, Side::Commutator] {
            let s = Superop::single(side, a, C64::new(0.3, -1.1));
            let direct = s.apply(&rho);
            let v = nalgebra::Vector4::new(rho[(0, 0)], rho[(0, 1)], rho[(1, 0)], rho[(1, 1)]);
            let w = s.matrix() * v;
            for (k, (r, c)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                assert!((w[k] - direct[(r, c)]).norm() < 1e-14, "{side:?}");
            }
        }
    }

    #[test]
    fn table_structure() {
        let p = ModelParams::default().with_field(0.4, 0.2).with_bath(0.4, 0.8, Coupling::Full);
        let t = build_coupling_table(&p).unwrap();
        for d in &t.directions[..3] {
            assert_eq!(d.alpha.im, 0.0);
            assert!(d.alpha.re < 0.0);
            assert_eq!(d.lift, d.drop);
            assert!(d.lift.apply(&Mat2::identity()).iter().all(|z| z.norm() < 1e-15));
        }
        let (a1, a2) = (t.directions[3].alpha, t.directions[4].alpha);
        assert_eq!(a1, a2.conj());
        assert_eq!(a1, C64::new(-0.8, 1.0));
        // printed convention: lift scale is delta itself
        let phi = t.directions[0].lift.terms[0].scalar;
        assert!(close(phi.im, -0.4, 1e-15));
        // first-tier bath product equals the correlation amplitude
        let lam = t.directions[3].lift.terms[0].scalar.norm();
        let half = t.directions[3].drop.terms[0].scalar.norm();
        assert!(close(lam * half, p.bath.amplitude(), 1e-15));
    }

    #[test]
    fn zero_coupling_directions_inactive() {
        let t = build_coupling_table(&ModelParams::default()).unwrap();
        assert!(t.directions.iter().all(|d| !d.active));
        for d in &t.directions[..3] {
            assert!(d.lift.is_zero() && d.drop.is_zero());
        }
        assert!(t.directions[3].drop.is_zero() && t.directions[4].drop.is_zero());
    }

    #[test]
    fn field_conventions_differ_by_sqrt_gamma() {
        let p = ModelParams::default().with_field(0.4, 0.25);
        let printed = p.field.process(OuKind::Xi1).unwrap();
        let eq3 = p.with_field_convention(FieldConvention::EqThree).field.process(OuKind::Xi1).unwrap();
        assert!(close(printed.variance(), 0.16, 1e-15));
        assert!(close(eq3.variance(), 0.16 / 0.25, 1e-15));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(Mat2::identity()).is_err());
        let non_herm = Mat2::new(C64::from(0.5), C64::from(0.1), C64::from(0.0), C64::from(0.5));
        assert!(DensityMatrix::new(non_herm).is_err());
        let negative = Mat2::new(C64::from(1.5), ZERO, ZERO, C64::from(-0.5));
        assert!(DensityMatrix::new(negative).is_err());
        assert_eq!(DensityMatrix::excited().excited_population(), 1.0);
        assert_eq!(DensityMatrix::ground().excited_population(), 0.0);
        assert_eq!(DensityMatrix::maximally_mixed().excited_population(), 0.5);
    }
}
