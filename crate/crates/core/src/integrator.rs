//! Dormand-Prince 5(4) integrator for linear complex systems with
//! continuous output on a leading sub-block of the state.

use std::ops::ControlFlow;

use crate::error::{HeomError, Result};
use crate::model::C64;

// The right-hand side is autonomous, so the stage nodes c_i are not needed.

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, h_init: 1e-2, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Time actually reached (earlier than requested if the observer stopped).
    pub t_reached: f64,
    /// Sum over accepted steps of the sup-norm local error estimate on the
    /// densely sampled block.
    pub error_estimate: f64,
}

/// Reusable workspace for one state dimension.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    k: [Vec<C64>; 7],
    stage: Vec<C64>,
    y_new: Vec<C64>,
    /// Length of the leading block that receives dense output.
    dense: usize,
}

impl Dopri5 {
    pub fn new(n: usize, dense: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            stage: z.clone(),
            y_new: z,
            dense: dense.min(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.stage.len()
    }

    /// Integrate `dy/dt = f(y)` from `t0` to `t_end`, reporting the leading
    /// `dense` components at each of `samples` (ascending, inside
    /// `[t0, t_end]`). The observer may stop the integration early; `y` then
    /// holds the state at the end of the step in progress.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate<F, O>(
        &mut self,
        mut f: F,
        y: &mut [C64],
        t0: f64,
        t_end: f64,
        samples: &[f64],
        control: &StepControl,
        mut observer: O,
    ) -> Result<IntegrationStats>
    where
        F: FnMut(&[C64], &mut [C64]),
        O: FnMut(f64, &[C64]) -> ControlFlow<()>,
    {
        let n = self.dim();
        assert_eq!(y.len(), n, "workspace dimension mismatch");
        let mut stats = IntegrationStats { t_reached: t0, ..Default::default() };
        let mut next_sample = 0;
        let eps = 1e-12 * t_end.abs().max(1.0);

        while next_sample < samples.len() && samples[next_sample] <= t0 + eps {
            if observer(samples[next_sample], &y[..self.dense]).is_break() {
                return Ok(stats);
            }
            next_sample += 1;
        }
        if t_end <= t0 + eps {
            return Ok(stats);
        }

        let mut t = t0;
        let mut h = control.h_init.min(t_end - t0).min(control.h_max);
        let h_min = 1e-14 * t_end.abs().max(1.0);
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;

        f(y, &mut self.k[0]);
        stats.evaluations += 1;
        let mut dense_buf = vec![[C64::new(0.0, 0.0); 5]; self.dense];

        loop {
            if stats.accepted + stats.rejected >= control.max_steps {
                return Err(HeomError::IntegrationFailure {
                    time: t,
                    reason: format!("step limit {} reached", control.max_steps),
                });
            }
            if h < h_min {
                return Err(HeomError::StepSizeUnderflow { time: t, step: h });
            }
            let last = t + h >= t_end - eps;
            if last {
                h = t_end - t;
            }

            self.stages(&mut f, y, h);
            stats.evaluations += 6;

            let (err, local_sup) = self.error_norm(y, h, control);
            if !err.is_finite() {
                return Err(HeomError::IntegrationFailure { time: t, reason: "non-finite state".into() });
            }

            const BETA: f64 = 0.04;
            const SAFE: f64 = 0.9;
            let fac11 = err.powf(0.2 - 0.75 * BETA);
            if err <= 1.0 {
                let fac = (fac11 / fac_old.powf(BETA) / SAFE).clamp(0.1, 5.0);
                fac_old = err.max(1e-4);
                stats.accepted += 1;
                stats.error_estimate += local_sup;

                let t_new = t + h;
                let mut stop = false;
                if next_sample < samples.len() && samples[next_sample] <= t_new + eps {
                    self.fill_dense(y, h, &mut dense_buf);
                    let mut out = vec![C64::new(0.0, 0.0); self.dense];
                    while next_sample < samples.len() && samples[next_sample] <= t_new + eps {
                        let ts = samples[next_sample];
                        let theta = ((ts - t) / h).clamp(0.0, 1.0);
                        let theta1 = 1.0 - theta;
                        for (o, r) in out.iter_mut().zip(dense_buf.iter()) {
                            *o = r[0] + (r[1] + (r[2] + (r[3] + r[4] * theta1) * theta) * theta1) * theta;
                        }
                        next_sample += 1;
                        if observer(ts, &out).is_break() {
                            stop = true;
                            break;
                        }
                    }
                }

                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                t = t_new;
                stats.t_reached = t;
                if stop || last {
                    return Ok(stats);
                }
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                last_rejected = false;
                h = h_new.min(control.h_max);
            } else {
                stats.rejected += 1;
                last_rejected = true;
                h /= (fac11 / SAFE).min(5.0);
            }
        }
    }

    fn stages<F>(&mut self, f: &mut F, y: &[C64], h: f64)
    where
        F: FnMut(&[C64], &mut [C64]),
    {
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let stage = &mut self.stage;
        for i in 0..y.len() {
            stage[i] = y[i] + k1[i] * (h * A21);
        }
        f(stage, k2);
        for i in 0..y.len() {
            stage[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(stage, k3);
        for i in 0..y.len() {
            stage[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(stage, k4);
        for i in 0..y.len() {
            stage[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(stage, k5);
        for i in 0..y.len() {
            stage[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(stage, k6);
        let y_new = &mut self.y_new;
        for i in 0..y.len() {
            y_new[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(y_new, k7);
    }

    /// Scaled RMS error over real and imaginary parts, plus the sup-norm of
    /// the raw error on the dense block.
    fn error_norm(&self, y: &[C64], h: f64, c: &StepControl) -> (f64, f64) {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut sum = 0.0;
        let mut sup: f64 = 0.0;
        for i in 0..y.len() {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let yn = self.y_new[i];
            let sc_re = c.abs_tol + c.rel_tol * y[i].re.abs().max(yn.re.abs());
            let sc_im = c.abs_tol + c.rel_tol * y[i].im.abs().max(yn.im.abs());
            sum += (e.re / sc_re).powi(2) + (e.im / sc_im).powi(2);
            if i < self.dense {
                sup = sup.max(e.norm());
            }
        }
        ((sum / (2 * y.len()) as f64).sqrt(), sup)
    }

    fn fill_dense(&self, y: &[C64], h: f64, buf: &mut [[C64; 5]]) {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        for (i, r) in buf.iter_mut().enumerate() {
            let diff = self.y_new[i] - y[i];
            let bspl = k1[i] * h - diff;
            r[0] = y[i];
            r[1] = diff;
            r[2] = bspl;
            r[3] = diff - k7[i] * h - bspl;
            r[4] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
        }
    }
}
