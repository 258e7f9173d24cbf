use crate::error::{invalid, Result};
use crate::model::{OuKind, OuProcess, C64};

/// `sinh(z) / z`, finite at the origin.
fn sinhc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        C64::from(1.0) + z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sinh() / z
    }
}

/// Excited-state amplitude of the qubit in a zero-temperature Lorentzian
/// bath under the RWA, starting from the excited state, in the frame
/// rotating at the qubit frequency. `amplitude` is the bath correlation at
/// zero lag.
pub fn rwa_bath_amplitude(t: f64, gamma_b: f64, amplitude: f64) -> C64 {
    let d = C64::from(gamma_b * gamma_b - 4.0 * amplitude).sqrt();
    let x = d * (0.5 * t);
    (-0.5 * gamma_b * t).exp() * (x.cosh() + 0.5 * gamma_b * t * sinhc(x))
}

pub fn rwa_bath_excited_population(t: f64, gamma_b: f64, amplitude: f64) -> f64 {
    rwa_bath_amplitude(t, gamma_b, amplitude).norm_sqr()
}

/// Amplitude at which the RWA decay is critically damped.
pub fn critical_amplitude(gamma_b: f64) -> f64 {
    gamma_b * gamma_b / 4.0
}

/// `|rho_01(t)| / |rho_01(0)|` under the dephasing process alone.
pub fn ou_dephasing_coherence(t: f64, proc: &OuProcess) -> Result<f64> {
    if proc.kind != OuKind::Omega {
        return Err(invalid("kind", "dephasing envelope needs the Omega process"));
    }
    if t < 0.0 {
        return Err(invalid("t", "must be >= 0"));
    }
    let g = proc.gamma;
    let x = g * t;
    Ok((-(proc.variance() / (g * g)) * (x + (-x).exp_m1())).exp())
}
