//! The al functions `al_r = sqrt(U(a_r))` and their normalized versions
//! `frak_al_r = gamma_r al_r` with `gamma_r^2 = 1 / A'(a_r)`.
//!
//! Along the time flow `frak_al_r` is the position `q_r` and its time
//! derivative is the velocity. Everything here works with the real squares
//! `q_r^2 = U(a_r)/A'(a_r)`, `qdot_r^2 = W(a_r)/A'(a_r)` and the product
//! `q_r qdot_r = V(a_r)/A'(a_r)`; signs are carried separately by a
//! [`SignTracker`], since `gamma_r` is imaginary whenever `A'(a_r) < 0`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mumford::{divisor_velocities, metric_quadratic_form, MumfordTriple};
use crate::neumann::{self, NeumannState, Trajectory};

/// Negative squares down to this size are rounding and get clipped to zero.
pub const CLIP_TOL: f64 = 1e-10;
/// Negative squares beyond this mean the triple left the real regime.
pub const REAL_REGIME_TOL: f64 = 1e-6;
/// Log-derivative checks are skipped for coordinates smaller than this.
pub const MIURA_GUARD: f64 = 1e-3;

/// Current branch of each coordinate: `sigma[i]` is the sign of `q_i` and
/// `sigma_dot[i]` the sign of `qdot_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignTracker {
    pub sigma: Vec<i8>,
    pub sigma_dot: Vec<i8>,
}

impl SignTracker {
    pub fn positive(dim: usize) -> Self {
        SignTracker {
            sigma: vec![1; dim],
            sigma_dot: vec![1; dim],
        }
    }

    /// Signs read off a state; zero components count as positive.
    pub fn from_state(s: &NeumannState) -> Self {
        let sign = |x: &f64| if *x < 0.0 { -1 } else { 1 };
        SignTracker {
            sigma: s.q.iter().map(sign).collect(),
            sigma_dot: s.qdot.iter().map(sign).collect(),
        }
    }

    fn update_from(&mut self, s: &NeumannState) {
        for i in 0..s.dim() {
            if s.q[i] != 0.0 {
                self.sigma[i] = if s.q[i] < 0.0 { -1 } else { 1 };
            }
            if s.qdot[i] != 0.0 {
                self.sigma_dot[i] = if s.qdot[i] < 0.0 { -1 } else { 1 };
            }
        }
    }
}

fn clip(values: Vec<f64>, what: &'static str) -> Result<Vec<f64>> {
    values
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            if value < -REAL_REGIME_TOL {
                Err(Error::OutsideRealRegime { what, index, value })
            } else if value < CLIP_TOL {
                Ok(value.max(0.0))
            } else {
                Ok(value)
            }
        })
        .collect()
}

fn squares_unclipped(t: &MumfordTriple) -> Vec<f64> {
    let curve = t.curve();
    curve
        .a()
        .iter()
        .zip(curve.aprime())
        .map(|(&ai, &d)| t.u().eval(ai) / d)
        .collect()
}

/// `frak_al_r^2 = U(a_r) / A'(a_r)`.
pub fn frak_al_sq(t: &MumfordTriple) -> Result<Vec<f64>> {
    clip(squares_unclipped(t), "frak_al^2")
}

/// `(d frak_al_r / dt)^2 = W(a_r) / A'(a_r)`.
pub fn frak_al_dot_sq(t: &MumfordTriple) -> Result<Vec<f64>> {
    let (w, _) = t.w_poly()?;
    let curve = t.curve();
    let raw = curve
        .a()
        .iter()
        .zip(curve.aprime())
        .map(|(&ai, &d)| w.eval(ai) / d)
        .collect();
    clip(raw, "frak_al_dot^2")
}

/// `frak_al_r * d frak_al_r / dt = V(a_r) / A'(a_r)`.
pub fn frak_al_cross(t: &MumfordTriple) -> Vec<f64> {
    let curve = t.curve();
    curve
        .a()
        .iter()
        .zip(curve.aprime())
        .map(|(&ai, &d)| t.v().eval(ai) / d)
        .collect()
}

/// Unsigned phase-plane point for coordinate `i`, up to an overall sign.
/// Whichever of `|q|`, `|qdot|` is larger is taken from its square root and
/// the other from the product, so neither is read off a square root near zero.
fn phase_point(pos_sq: f64, vel_sq: f64, cross: f64, index: usize) -> Result<(f64, f64, bool)> {
    if pos_sq.max(vel_sq) < 1e-16 {
        return Err(Error::DegenerateBranch { index });
    }
    if pos_sq >= vel_sq {
        let q = pos_sq.sqrt();
        Ok((q, cross / q, true))
    } else {
        let v = vel_sq.sqrt();
        Ok((cross / v, v, false))
    }
}

struct Squares {
    pos: Vec<f64>,
    vel: Vec<f64>,
    cross: Vec<f64>,
}

fn squares(t: &MumfordTriple) -> Result<Squares> {
    Ok(Squares {
        pos: frak_al_sq(t)?,
        vel: frak_al_dot_sq(t)?,
        cross: frak_al_cross(t),
    })
}

/// `q_i = frak_al_i`, `qdot_i = frak_al_i^{[g]}`, on the branch chosen by `tracker`.
pub fn recover_state(t: &MumfordTriple, tracker: &SignTracker) -> Result<NeumannState> {
    let sq = squares(t)?;
    let n = sq.pos.len();
    let mut q = vec![0.0; n];
    let mut qdot = vec![0.0; n];
    for i in 0..n {
        let (x, v, by_position) = phase_point(sq.pos[i], sq.vel[i], sq.cross[i], i)?;
        let s = if by_position {
            tracker.sigma[i]
        } else {
            tracker.sigma_dot[i]
        } as f64;
        q[i] = s * x;
        qdot[i] = s * v;
    }
    on_sphere(q, qdot)
}

/// The recovered point, projected back onto `|q| = 1`, `q . qdot = 0`.
fn on_sphere(q: Vec<f64>, qdot: Vec<f64>) -> Result<NeumannState> {
    let mut s = NeumannState::new(q, qdot)?;
    s.project();
    Ok(s)
}

/// Positions and velocities along a sampled flow, with each coordinate kept
/// on the branch continuous with the previous sample.
///
/// The phase-plane point `(q_i, qdot_i)` is known up to a global sign and
/// never passes through the origin on a nondegenerate flow, so the
/// representative closest to a second-order prediction from the previous
/// sample is taken. Samples record `frobenius1` and `divisibility`.
pub fn track_along(
    samples: &[(f64, MumfordTriple)],
    initial: SignTracker,
) -> Result<Trajectory> {
    let mut tracker = initial;
    let mut traj = Trajectory::default();
    let mut prev: Option<(f64, NeumannState, Vec<f64>)> = None;

    for (t, triple) in samples {
        let sq = squares(triple)?;
        let n = sq.pos.len();
        let state = match &prev {
            None => recover_state(triple, &tracker)?,
            Some((t_prev, s_prev, acc_prev)) => {
                let dt = t - t_prev;
                let mut q = vec![0.0; n];
                let mut qdot = vec![0.0; n];
                for i in 0..n {
                    let (x, v, _) = phase_point(sq.pos[i], sq.vel[i], sq.cross[i], i)?;
                    let pq = s_prev.q[i] + dt * s_prev.qdot[i] + 0.5 * dt * dt * acc_prev[i];
                    let pv = s_prev.qdot[i] + dt * acc_prev[i];
                    let align = x * pq + v * pv;
                    let norm = (x * x + v * v).sqrt() * (pq * pq + pv * pv).sqrt();
                    if align.abs() < 0.5 * norm {
                        return Err(Error::AmbiguousCrossing {
                            index: i,
                            t0: *t_prev,
                            t1: *t,
                        });
                    }
                    let s = align.signum();
                    q[i] = s * x;
                    qdot[i] = s * v;
                }
                on_sphere(q, qdot)?
            }
        };
        tracker.update_from(&state);
        let a = triple.curve().a();
        let (_, acc) = neumann::vector_field(a, &state)?;

        let mut res = BTreeMap::new();
        let frob = squares_unclipped(triple).iter().sum::<f64>() - 1.0;
        res.insert("frobenius1".to_string(), frob.abs());
        res.insert("divisibility".to_string(), triple.divisibility_residual());
        traj.times.push(*t);
        traj.states.push(state.clone());
        traj.residuals.push(res);
        prev = Some((*t, state, acc));
    }
    Ok(traj)
}

/// Identity residuals for a single triple.
///
/// `values` holds the checks that are expected to vanish; `diagnostics`
/// holds quantities reported for comparison only. Entries whose guard
/// condition fails are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityResiduals {
    pub values: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl IdentityResiduals {
    pub fn max_value(&self) -> f64 {
        self.values.values().copied().fold(0.0, f64::max)
    }
}

pub fn identity_residuals(t: &MumfordTriple) -> Result<IdentityResiduals> {
    let curve = t.curve();
    let a = curve.a();
    let sq = squares(t)?;
    let (w, _) = t.w_poly()?;
    let wp = t.wp_gg();
    let beta = curve.beta();
    let sum_a: f64 = a.iter().sum();
    let sum_c: f64 = curve.c().iter().sum();
    let mut out = IdentityResiduals::default();
    let mut put = |name: &str, value: f64| {
        out.values.insert(name.to_string(), value);
    };

    let frob1: f64 = squares_unclipped(t).iter().sum::<f64>() - 1.0;
    put("frobenius1", frob1.abs());

    if a.iter().all(|&ai| ai != 0.0) {
        let weighted: f64 = sq.vel.iter().zip(a).map(|(v, ai)| v / ai).sum();
        let at_zero = w.eval(0.0) / curve.big_a().eval(0.0);
        put("frobenius2_general", (weighted + at_zero - 1.0).abs());
    }

    let kinetic: f64 = sq.vel.iter().sum();
    put("lemma43_1", (kinetic - (wp - sum_c)).abs());
    let potential: f64 = sq.pos.iter().zip(a).map(|(p, ai)| p * ai).sum();
    put("lemma43_2", (potential - (sum_a - wp)).abs());

    let state = recover_state(t, &SignTracker::positive(a.len()))?;
    let (_, acc) = neumann::vector_field(a, &state)?;
    let prop33 = (0..a.len())
        .map(|i| (acc[i] - (beta - a[i] - 2.0 * wp) * state.q[i]).abs())
        .fold(0.0, f64::max);
    put("prop33", prop33);

    // Miura form with both candidate constants; L = (2 wp_gg - beta) / 2.
    let lagr = 0.5 * (2.0 * wp - beta);
    let mut miura = None::<f64>;
    let mut miura_alt = None::<f64>;
    for i in 0..a.len() {
        let q = state.q[i];
        if q.abs() <= MIURA_GUARD {
            continue;
        }
        let d1 = state.qdot[i] / q;
        let d2 = (acc[i] * q - state.qdot[i] * state.qdot[i]) / (q * q);
        let lhs = d1 * d1 + d2;
        let r = (lhs - (-2.0 * lagr - a[i])).abs();
        let r_alt = (lhs - (lagr - a[i])).abs();
        miura = Some(miura.map_or(r, |m| m.max(r)));
        miura_alt = Some(miura_alt.map_or(r_alt, |m| m.max(r_alt)));
    }
    if let Some(m) = miura {
        put("miura", m);
    }

    if let Ok(form) = metric_quadratic_form(t) {
        put("metric_form", (form - kinetic).abs());
    }
    if let Some(m) = miura_alt {
        out.diagnostics.insert("miura_l_minus_a".to_string(), m);
    }
    if let Ok(xdot) = divisor_velocities(t) {
        let dwp: f64 = xdot.iter().sum();
        out.diagnostics.insert("wp_gg_rate".to_string(), dwp);
    }
    Ok(out)
}
