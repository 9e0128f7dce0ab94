//! Dormand–Prince 5(4) with PI step-size control.
//!
//! Steps land exactly on the requested end time. An optional post-step hook
//! may modify an accepted state (projection onto a constraint manifold); the
//! first stage is re-evaluated after it, so FSAL is not used.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
// 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerances {
            rtol,
            atol,
            max_steps: 5_000_000,
        }
    }
}

/// Integrator state carried across successive `advance` calls.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    tol: Tolerances,
    h: Option<f64>,
    fac_old: f64,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Dopri5 {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        Dopri5 {
            tol,
            h: None,
            fac_old: 1e-4,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            y_stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            accepted: 0,
            rejected: 0,
        }
    }

    fn initial_step<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], dir: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        rhs(t, y, &mut self.k[0]);
        let sc = |i: usize| self.tol.atol + self.tol.rtol * y[i].abs();
        let d0 = (0..n).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>() / n as f64;
        let d1 = (0..n).map(|i| (self.k[0][i] / sc(i)).powi(2)).sum::<f64>() / n as f64;
        let mut h = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6
        } else {
            0.01 * (d0 / d1).sqrt()
        };
        for i in 0..n {
            self.y_stage[i] = y[i] + dir * h * self.k[0][i];
        }
        rhs(t + dir * h, &self.y_stage, &mut self.k[1]);
        let d2 = ((0..n)
            .map(|i| ((self.k[1][i] - self.k[0][i]) / sc(i)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h;
        let h1 = if d1.sqrt().max(d2) <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.sqrt().max(d2)).powf(0.2)
        };
        h = (100.0 * h).min(h1);
        h
    }

    /// Advance `y` from `t0` to `t1` (either direction). The hook runs after each
    /// accepted step and returns the displacement it applied; the largest one
    /// is returned.
    pub fn advance<F, P>(
        &mut self,
        rhs: &mut F,
        post: &mut P,
        t0: f64,
        y: &mut [f64],
        t1: f64,
    ) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        P: FnMut(&mut [f64]) -> f64,
    {
        let n = y.len();
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(0.0);
        }
        let dir = span.signum();
        let mut t = t0;
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(rhs, t, y, dir),
        };
        let mut max_displacement = 0.0_f64;
        let mut last_rejected = false;
        let mut steps = 0usize;

        loop {
            let remaining = (t1 - t) * dir;
            if remaining <= 0.0 {
                break;
            }
            steps += 1;
            if steps > self.tol.max_steps {
                return Err(Error::TooManySteps { t });
            }
            let hmin = 1e-14 * t.abs().max(1.0);
            if h < hmin {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            let hs = dir * step;

            rhs(t, y, &mut self.k[0]);
            self.stage(rhs, t, y, hs, C2, &[A21]);
            self.stage(rhs, t, y, hs, C3, &[A31, A32]);
            self.stage(rhs, t, y, hs, C4, &[A41, A42, A43]);
            self.stage(rhs, t, y, hs, C5, &[A51, A52, A53, A54]);
            self.stage(rhs, t, y, hs, 1.0, &[A61, A62, A63, A64, A65]);
            for i in 0..n {
                self.y_new[i] = y[i]
                    + hs * (A71 * self.k[0][i]
                        + A73 * self.k[2][i]
                        + A74 * self.k[3][i]
                        + A75 * self.k[4][i]
                        + A76 * self.k[5][i]);
            }
            rhs(t + hs, &self.y_new, &mut self.k[6]);

            let mut err = 0.0;
            for i in 0..n {
                let e = hs
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(self.y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                self.rejected += 1;
                h = step * FAC_MIN;
                last_rejected = true;
                continue;
            }

            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                let mut fac = fac11 / self.fac_old.powf(BETA);
                fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = step / fac;
                if last_rejected {
                    h_new = h_new.min(step);
                }
                self.fac_old = err.max(1e-4);
                self.accepted += 1;
                y.copy_from_slice(&self.y_new);
                max_displacement = max_displacement.max(post(y));
                t = if last { t1 } else { t + hs };
                // a step truncated onto t1 says nothing about the natural step size
                h = if last { h.max(h_new) } else { h_new };
                last_rejected = false;
            } else {
                self.rejected += 1;
                h = step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                last_rejected = true;
            }
        }
        self.h = Some(h);
        Ok(max_displacement)
    }

    fn stage<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], hs: f64, c: f64, a: &[f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let s = a.len();
        for i in 0..y.len() {
            let mut acc = 0.0;
            for (j, &aj) in a.iter().enumerate() {
                acc += aj * self.k[j][i];
            }
            self.y_stage[i] = y[i] + hs * acc;
        }
        rhs(t + c * hs, &self.y_stage, &mut self.k[s]);
    }
}

/// Output grid `0, dt, 2dt, ...` closed with `t_end` itself.
pub fn sample_times(t_end: f64, dt_out: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    if t_end <= 0.0 {
        return times;
    }
    let mut k = 1u64;
    loop {
        let t = k as f64 * dt_out;
        if t >= t_end - 1e-9 * dt_out {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_end);
    times
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_hook(_: &mut [f64]) -> f64 {
        0.0
    }

    #[test]
    fn sample_grid_ends_at_t_end() {
        assert_eq!(sample_times(0.0, 0.1), vec![0.0]);
        let t = sample_times(1.0, 0.25);
        assert_eq!(t, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let t = sample_times(1.0, 0.3);
        assert_eq!(t.len(), 5);
        assert_eq!(*t.last().unwrap(), 1.0);
    }

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut y = vec![1.0, 0.0];
        let mut solver = Dopri5::new(2, Tolerances::new(1e-11, 1e-13));
        let mut t = 0.0;
        for k in 1..=100 {
            let t1 = 0.1 * k as f64;
            solver.advance(&mut rhs, &mut no_hook, t, &mut y, t1).unwrap();
            t = t1;
            assert!((y[0] - t.cos()).abs() < 1e-9, "t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_integration_returns_exponential() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        let mut y = vec![1.0];
        let mut solver = Dopri5::new(1, Tolerances::new(1e-12, 1e-14));
        solver.advance(&mut rhs, &mut no_hook, 0.0, &mut y, -2.0).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn finite_time_blowup_underflows() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let mut y = vec![1.0];
        let mut solver = Dopri5::new(1, Tolerances::new(1e-10, 1e-12));
        let err = solver
            .advance(&mut rhs, &mut no_hook, 0.0, &mut y, 2.0)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::StepSizeUnderflow { .. } | Error::TooManySteps { .. }
        ));
    }
}
