//! Mumford coordinates `(U, V, W)` on the symmetric product of the spectral
//! curve and their evolution along the time flow.
//!
//! Conventions: `U` is monic of degree `g`, `V` has degree `<= g - 1`, and
//! `W = (f + V^2) / U` so that `U W - V^2 = f`. At a root `x_a` of `U` this
//! forces `V(x_a)^2 = -f(x_a)`: the real dynamical sheet is `y^2 = -f`.
//! The flow is
//!
//! ```text
//! dU/dt = 2 V
//! dV/dt = W - (x + 2 wp_gg - beta) U
//! ```
//!
//! which moves each divisor point as `dx_a/dt = -2 V(x_a) / U'(x_a)`.

use std::sync::Arc;

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::neumann::DEFAULT_ATOL;
use crate::ode::{sample_times, Dopri5, Tolerances};
use crate::poly::Poly;

/// Relative remainder of `(f + V^2) / U` accepted for a triple on the curve.
pub const DIVISIBILITY_TOL: f64 = 1e-9;
/// Relative remainder at which a running flow is declared broken.
pub const DIVISIBILITY_FAILURE: f64 = 1e-7;
pub const MONIC_TOL: f64 = 1e-12;
pub const CANCELLATION_TOL: f64 = 1e-10;
/// Divisor-level diagnostics need roots of `U` at least this far apart.
pub const MIN_ROOT_GAP: f64 = 1e-6;
/// Step used by the finite-difference divisor diagnostic.
pub const DIVISOR_FD_STEP: f64 = 1e-4;
/// Inside this distance of a coupling constant the diagonal metric term is
/// evaluated through the curve equation instead of `xdot_a^2`.
pub const METRIC_GUARD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MumfordTriple {
    u: Poly,
    v: Poly,
    curve: Arc<CurveSpec>,
}

impl MumfordTriple {
    /// Checks shape only (monic `U` of degree `g`, `deg V <= g - 1`); whether the
    /// triple lies on the curve is reported by [`Self::divisibility_residual`].
    pub fn new(curve: Arc<CurveSpec>, u: Poly, v: Poly) -> Result<Self> {
        let g = curve.genus();
        if u.degree() != g || u.is_zero() {
            return Err(Error::LengthMismatch {
                what: "U degree",
                expected: g,
                found: u.degree(),
            });
        }
        if (u.leading() - 1.0).abs() > MONIC_TOL {
            return Err(Error::NotMonic { leading: u.leading() });
        }
        let mut uc = u.coeffs().to_vec();
        uc[g] = 1.0;
        let (v, dropped) = v.truncate(g - 1);
        if dropped > CANCELLATION_TOL * v.max_abs().max(1.0) {
            return Err(Error::DegreeDrop {
                which: "V",
                residual: dropped,
            });
        }
        Ok(MumfordTriple {
            u: Poly::new(uc),
            v,
            curve,
        })
    }

    /// From the `g` lower coefficients of `U` followed by the `g` coefficients of `V`.
    pub fn from_state_vector(curve: Arc<CurveSpec>, y: &[f64]) -> Self {
        let g = curve.genus();
        let mut uc = y[..g].to_vec();
        uc.push(1.0);
        MumfordTriple {
            u: Poly::new(uc),
            v: Poly::new(y[g..2 * g].to_vec()),
            curve,
        }
    }

    pub fn state_vector(&self) -> Vec<f64> {
        let g = self.genus();
        (0..g)
            .map(|k| self.u.coeff(k))
            .chain((0..g).map(|k| self.v.coeff(k)))
            .collect()
    }

    pub fn u(&self) -> &Poly {
        &self.u
    }

    pub fn v(&self) -> &Poly {
        &self.v
    }

    pub fn curve(&self) -> &CurveSpec {
        &self.curve
    }

    pub fn curve_arc(&self) -> &Arc<CurveSpec> {
        &self.curve
    }

    pub fn genus(&self) -> usize {
        self.curve.genus()
    }

    /// The same divisor traversed backwards in time (`V -> -V`).
    pub fn reversed(&self) -> Self {
        MumfordTriple {
            u: self.u.clone(),
            v: -&self.v,
            curve: Arc::clone(&self.curve),
        }
    }

    fn division(&self) -> (Poly, f64) {
        let numerator = self.curve.f() + &(&self.v * &self.v);
        let (w, rem) = numerator
            .divmod(&self.u)
            .expect("U is monic, never the zero polynomial");
        (w, rem.max_abs() / self.curve.f().max_abs())
    }

    /// `max|remainder of (f + V^2) / U| / max|f|`.
    pub fn divisibility_residual(&self) -> f64 {
        self.division().1
    }

    /// `U W - V^2 - f`, coefficient-wise, relative to `max|f|`.
    pub fn curve_residual(&self) -> Result<f64> {
        let (w, _) = self.w_poly()?;
        let recomposed = &(&self.u * &w) - &(&self.v * &self.v);
        let diff = &recomposed - self.curve.f();
        Ok(diff.max_abs() / self.curve.f().max_abs())
    }

    /// `W = (f + V^2) / U` and the relative division remainder.
    pub fn w_poly(&self) -> Result<(Poly, f64)> {
        let (w, residual) = self.division();
        if residual > DIVISIBILITY_TOL {
            return Err(Error::NotDivisible { residual });
        }
        Ok((w, residual))
    }

    /// Sum of the divisor abscissae, read off as `-[x^{g-1}] U`.
    pub fn wp_gg(&self) -> f64 {
        -self.u.coeff(self.genus() - 1)
    }
}

pub fn w_poly(t: &MumfordTriple) -> Result<(Poly, f64)> {
    t.w_poly()
}

pub fn wp_gg(t: &MumfordTriple) -> f64 {
    t.wp_gg()
}

/// `(dU, dV)` of the time flow, each of degree `<= g - 1`.
pub fn flow_rhs(t: &MumfordTriple) -> Result<(Poly, Poly)> {
    let g = t.genus();
    let (w, _) = t.w_poly()?;
    let kappa = t.curve.beta() - 2.0 * t.wp_gg();
    let shift = Poly::new(vec![-kappa, 1.0]);
    let raw = &w - &(&shift * &t.u);
    let (dv, dropped) = raw.truncate(g - 1);
    let scale = w.max_abs().max(t.u.max_abs()).max(1.0);
    if dropped > CANCELLATION_TOL * scale {
        return Err(Error::CancellationFailure { residual: dropped });
    }
    Ok((t.v.scale(2.0), dv))
}

/// Unchecked right-hand side in state-vector form for the integrator.
fn flow_rhs_raw(curve: &CurveSpec, y: &[f64], dy: &mut [f64]) {
    let g = curve.genus();
    let mut uc = y[..g].to_vec();
    uc.push(1.0);
    let u = Poly::new(uc);
    let v = Poly::new(y[g..].to_vec());
    let numerator = curve.f() + &(&v * &v);
    let (w, _) = numerator.divmod(&u).expect("monic U");
    let kappa = curve.beta() + 2.0 * y[g - 1];
    for k in 0..g {
        dy[k] = 2.0 * v.coeff(k);
        let shifted = if k == 0 { 0.0 } else { u.coeff(k - 1) } - kappa * u.coeff(k);
        dy[g + k] = w.coeff(k) - shifted;
    }
}

fn tolerances(rtol: f64) -> Tolerances {
    Tolerances::new(rtol, DEFAULT_ATOL)
}

/// Flow the triple by `dt` (either sign) without sampling.
pub fn advance(t0: &MumfordTriple, dt: f64, rtol: f64) -> Result<MumfordTriple> {
    let curve = Arc::clone(&t0.curve);
    let mut y = t0.state_vector();
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs_raw(&curve, y, dy);
    let mut solver = Dopri5::new(y.len(), tolerances(rtol));
    solver.advance(&mut rhs, &mut |_: &mut [f64]| 0.0, 0.0, &mut y, dt)?;
    Ok(MumfordTriple::from_state_vector(Arc::clone(&t0.curve), &y))
}

/// Integrate the flow in the `2g` free coefficients, sampling at multiples of `dt_out`.
pub fn integrate_flow(
    t0: &MumfordTriple,
    t_end: f64,
    dt_out: f64,
    rtol: f64,
) -> Result<Vec<(f64, MumfordTriple)>> {
    crate::neumann::check_run_args(t_end, dt_out, rtol)?;
    let residual = t0.divisibility_residual();
    if residual > DIVISIBILITY_TOL {
        return Err(Error::NotDivisible { residual });
    }
    let curve = Arc::clone(&t0.curve);
    let mut y = t0.state_vector();
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs_raw(&curve, y, dy);
    let mut no_hook = |_: &mut [f64]| 0.0;
    let mut solver = Dopri5::new(y.len(), tolerances(rtol));

    let mut out = Vec::new();
    let mut t_prev = 0.0;
    for t in sample_times(t_end, dt_out) {
        solver.advance(&mut rhs, &mut no_hook, t_prev, &mut y, t)?;
        t_prev = t;
        let triple = MumfordTriple::from_state_vector(Arc::clone(&t0.curve), &y);
        let residual = triple.divisibility_residual();
        if residual > DIVISIBILITY_FAILURE {
            return Err(Error::DivisibilityGrowth { t, residual });
        }
        out.push((t, triple));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divisor {
    /// `(x_a, V(x_a))`, ascending in `x_a`.
    pub points: Vec<(f64, f64)>,
}

impl Divisor {
    /// `V(x_a)^2 + f(x_a)` at each point.
    pub fn on_curve_residuals(&self, curve: &CurveSpec) -> Vec<f64> {
        self.points
            .iter()
            .map(|&(x, v)| v * v + curve.f().eval(x))
            .collect()
    }

    pub fn min_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn abscissae(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }
}

pub fn divisor(t: &MumfordTriple) -> Result<Divisor> {
    let g = t.genus();
    let roots = t.u.real_roots()?;
    if roots.len() != g {
        return Err(Error::ComplexRoots {
            what: "U",
            found: roots.len(),
            expected: g,
        });
    }
    Ok(Divisor {
        points: roots.into_iter().map(|x| (x, t.v.eval(x))).collect(),
    })
}

fn simple_divisor(t: &MumfordTriple) -> Result<Divisor> {
    let d = divisor(t)?;
    let gap = d.min_gap();
    if gap <= MIN_ROOT_GAP {
        return Err(Error::RootCollision { gap });
    }
    Ok(d)
}

/// `dx_a/dt = -2 V(x_a) / U'(x_a)` at each divisor point.
pub fn divisor_velocities(t: &MumfordTriple) -> Result<Vec<f64>> {
    let d = simple_divisor(t)?;
    let du = t.u.derivative();
    Ok(d.points.iter().map(|&(x, v)| -2.0 * v / du.eval(x)).collect())
}

/// Largest gap between root-tracked central differences of the divisor and
/// [`divisor_velocities`].
pub fn divisor_flow_residual(t: &MumfordTriple, rtol: f64) -> Result<f64> {
    let h = DIVISOR_FD_STEP;
    let predicted = divisor_velocities(t)?;
    let forward = simple_divisor(&advance(t, h, rtol)?)?;
    let backward = simple_divisor(&advance(t, -h, rtol)?)?;
    Ok(forward
        .points
        .iter()
        .zip(&backward.points)
        .zip(&predicted)
        .map(|((f, b), p)| ((f.0 - b.0) / (2.0 * h) - p).abs())
        .fold(0.0, f64::max))
}

/// Kinetic metric on divisor coordinates,
/// `G_ab = (1/4) sum_i U(a_i) / ((a_i - x_a)(a_i - x_b) A'(a_i))`,
/// with the removable factors of `U(a_i)` cancelled symbolically.
pub fn metric_tensor(t: &MumfordTriple) -> Result<Vec<Vec<f64>>> {
    let d = simple_divisor(t)?;
    let xs = d.abscissae();
    let curve = t.curve();
    let g = xs.len();
    let mut metric = vec![vec![0.0; g]; g];
    for (&ai, &dai) in curve.a().iter().zip(curve.aprime()) {
        for a in 0..g {
            for b in 0..g {
                let rest: f64 = (0..g)
                    .filter(|&c| c != a && c != b)
                    .map(|c| ai - xs[c])
                    .product();
                let term = if a == b {
                    rest / (ai - xs[a])
                } else {
                    rest
                };
                metric[a][b] += 0.25 * term / dai;
            }
        }
    }
    Ok(metric)
}

/// `sum_{a,b} G_ab xdot_a xdot_b`, the kinetic energy `sum qdot_i^2` seen from
/// the divisor.
pub fn metric_quadratic_form(t: &MumfordTriple) -> Result<f64> {
    let d = simple_divisor(t)?;
    let xs = d.abscissae();
    let xdot = divisor_velocities(t)?;
    let du = t.u.derivative();
    let curve = t.curve();
    let g = xs.len();
    let mut total = 0.0;
    for (&ai, &dai) in curve.a().iter().zip(curve.aprime()) {
        for a in 0..g {
            for b in 0..g {
                let rest: f64 = (0..g)
                    .filter(|&c| c != a && c != b)
                    .map(|c| ai - xs[c])
                    .product();
                let contribution = if a != b {
                    0.25 * rest * xdot[a] * xdot[b]
                } else if (ai - xs[a]).abs() < METRIC_GUARD {
                    // near a_i: V(x_a)^2 = -f(x_a) cancels the 1/(a_i - x_a)
                    let others: f64 = curve
                        .a()
                        .iter()
                        .filter(|&&aj| aj != ai)
                        .map(|aj| xs[a] - aj)
                        .product();
                    rest * others * curve.q().eval(xs[a]) / du.eval(xs[a]).powi(2)
                } else {
                    0.25 * rest * xdot[a] * xdot[a] / (ai - xs[a])
                };
                total += contribution / dai;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1() -> MumfordTriple {
        let curve = Arc::new(CurveSpec::new(vec![1.0, 3.0], vec![1.47]).unwrap());
        MumfordTriple::new(curve, Poly::new(vec![-1.72, 1.0]), Poly::constant(0.48)).unwrap()
    }

    #[test]
    fn w_e1() {
        let t = e1();
        let (w, residual) = t.w_poly().unwrap();
        let want = [2.43, -3.75, 1.0];
        for (c, w) in w.coeffs().iter().zip(want) {
            assert!((c - w).abs() < 1e-12);
        }
        assert!(residual < 1e-14);
        let wa: Vec<f64> = t.curve().a().iter().map(|&a| w.eval(a)).collect();
        assert!((wa[0] + 0.32).abs() < 1e-12 && (wa[1] - 0.18).abs() < 1e-12);
        assert!((wa[0] * t.u().eval(1.0) - 0.48 * 0.48).abs() < 1e-12);
        assert!((wa[0] / -2.0 - 0.16).abs() < 1e-12);
        assert!((wa[1] / 2.0 - 0.09).abs() < 1e-12);
    }

    #[test]
    fn wp_gg_reads_coefficients() {
        assert!((e1().wp_gg() - 1.72).abs() < 1e-15);
        let curve = Arc::new(CurveSpec::new(vec![1.0, 2.5, 4.0], vec![1.5, 3.0]).unwrap());
        let t = MumfordTriple::new(
            curve,
            Poly::new(vec![6.0, -5.0, 1.0]),
            Poly::zero(),
        )
        .unwrap();
        assert_eq!(t.wp_gg(), 5.0);
        let roots: f64 = t.u().real_roots().unwrap().iter().sum();
        assert!((roots - t.wp_gg()).abs() < 1e-10);
    }

    #[test]
    fn flow_rhs_e1() {
        let (du, dv) = flow_rhs(&e1()).unwrap();
        assert_eq!(du.degree(), 0);
        assert!((du.coeff(0) - 0.96).abs() < 1e-12);
        assert_eq!(dv.degree(), 0);
        assert!((dv.coeff(0) + 1.0616).abs() < 1e-12);
    }

    #[test]
    fn flow_matches_forward_difference() {
        let t = e1();
        let h = 1e-6;
        let later = advance(&t, h, 1e-12).unwrap();
        let (du, dv) = flow_rhs(&t).unwrap();
        assert!(((later.u().coeff(0) - t.u().coeff(0)) / h - du.coeff(0)).abs() < 1e-5);
        assert!(((later.v().coeff(0) - t.v().coeff(0)) / h - dv.coeff(0)).abs() < 1e-5);
    }

    #[test]
    fn integrate_flow_zero_span() {
        let out = integrate_flow(&e1(), 0.0, 0.1, 1e-10).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1, e1());
    }

    #[test]
    fn perturbed_triple_is_refused() {
        let t = e1();
        let bad = MumfordTriple::new(
            Arc::clone(t.curve_arc()),
            t.u().clone(),
            Poly::constant(0.481),
        )
        .unwrap();
        assert!(bad.divisibility_residual() > 1e-4);
        assert!(matches!(bad.w_poly(), Err(Error::NotDivisible { .. })));
        assert!(integrate_flow(&bad, 1.0, 0.1, 1e-10).is_err());
    }

    #[test]
    fn shape_checks() {
        let t = e1();
        let curve = Arc::clone(t.curve_arc());
        assert!(MumfordTriple::new(Arc::clone(&curve), Poly::new(vec![1.0, 2.0]), Poly::zero()).is_err());
        assert!(MumfordTriple::new(Arc::clone(&curve), Poly::new(vec![1.0, 0.0, 1.0]), Poly::zero()).is_err());
        assert!(MumfordTriple::new(curve, Poly::x(), Poly::new(vec![0.1, 1.0])).is_err());
    }

    #[test]
    fn divisor_e1() {
        let t = e1();
        let d = divisor(&t).unwrap();
        assert_eq!(d.points.len(), 1);
        assert!((d.points[0].0 - 1.72).abs() < 1e-14);
        assert!((d.points[0].1 - 0.48).abs() < 1e-14);
        assert!(d.on_curve_residuals(t.curve())[0].abs() < 1e-12);
        let v = divisor_velocities(&t).unwrap();
        assert!((v[0] + 0.96).abs() < 1e-12);
        assert!(divisor_flow_residual(&t, 1e-12).unwrap() < 1e-5);
    }

    #[test]
    fn metric_e1() {
        let t = e1();
        assert!((metric_quadratic_form(&t).unwrap() - 0.25).abs() < 1e-12);
        let kinetic = t.wp_gg() - t.curve().c()[0];
        assert!((metric_quadratic_form(&t).unwrap() - kinetic).abs() < 1e-12);
        let g = metric_tensor(&t).unwrap();
        let xdot = divisor_velocities(&t).unwrap();
        assert!((g[0][0] * xdot[0] * xdot[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn reversal_flips_velocity_only() {
        let t = e1();
        let r = t.reversed();
        assert_eq!(r.u(), t.u());
        assert_eq!(r.v().coeff(0), -0.48);
        let (du, dv) = flow_rhs(&r).unwrap();
        assert!((du.coeff(0) + 0.96).abs() < 1e-12);
        assert!((dv.coeff(0) + 1.0616).abs() < 1e-12);
    }
}
