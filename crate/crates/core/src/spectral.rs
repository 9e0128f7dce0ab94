//! Forward and inverse spectral transform between initial data `(q, qdot)`
//! and the spectral curve with its Mumford triple, plus the two-path
//! round trip that compares direct integration against the algebraic flow.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::alfn::{self, SignTracker};
use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::mumford::{self, MumfordTriple, DIVISIBILITY_TOL};
use crate::neumann::{self, NeumannState, Trajectory, MANIFOLD_TOL};
use crate::poly::Poly;

/// Leading coefficients that must vanish by the constraints are accepted up to this.
pub const DEGREE_DROP_TOL: f64 = 1e-10;
/// `|m_i|` below this marks a branch point `c` sitting on a coupling constant.
pub const DEGENERATE_M: f64 = 1e-10;
/// Default output step of the round trip.
pub const DEFAULT_DT_OUT: f64 = 1e-2;
/// Finest sample spacing handed to the branch tracker.
pub const TRACKING_STEP: f64 = 1e-2;

/// Conserved data read off a state without building a curve; also valid
/// for degenerate spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Invariants {
    pub u: Poly,
    pub v: Poly,
    pub q_poly: Poly,
    pub m: Vec<f64>,
    /// Real roots of `Q`, ascending; fewer than `g` when `Q` has complex roots.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub curve: Arc<CurveSpec>,
    pub triple: MumfordTriple,
    pub m: Vec<f64>,
    pub residuals: BTreeMap<String, f64>,
}

fn interpolate_dropping(
    a: &[f64],
    values: Vec<f64>,
    keep_degree: usize,
    which: &'static str,
) -> Result<Poly> {
    let p = Poly::interpolate(a, &values)?;
    let (p, dropped) = p.truncate(keep_degree);
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if dropped > DEGREE_DROP_TOL * scale {
        return Err(Error::DegreeDrop {
            which,
            residual: dropped,
        });
    }
    Ok(p)
}

/// `U`, `V`, `Q`, `m` and the real roots of `Q` for the given state.
pub fn invariants_from_state(a: &[f64], s: &NeumannState) -> Result<Invariants> {
    neumann::validate_couplings(a)?;
    if s.dim() != a.len() {
        return Err(Error::LengthMismatch {
            what: "state dimension",
            expected: a.len(),
            found: s.dim(),
        });
    }
    let g = a.len() - 1;
    let da = Poly::from_roots(a).derivative();
    let aprime: Vec<f64> = a.iter().map(|&x| da.eval(x)).collect();

    let u_vals = (0..=g).map(|i| s.q[i] * s.q[i] * aprime[i]).collect();
    let v_vals = (0..=g).map(|i| s.q[i] * s.qdot[i] * aprime[i]).collect();
    let m = neumann::uhlenbeck_m(a, s);
    let q_vals = (0..=g).map(|i| m[i] * aprime[i]).collect();

    let u = interpolate_dropping(a, u_vals, g, "U")?;
    let v = if g == 0 {
        Poly::zero()
    } else {
        interpolate_dropping(a, v_vals, g - 1, "V")?
    };
    let q_poly = interpolate_dropping(a, q_vals, g, "Q")?;
    let c = q_poly.real_roots()?;
    Ok(Invariants {
        u,
        v,
        q_poly,
        m,
        c,
    })
}

/// Curve, triple and Uhlenbeck constants for an on-manifold state.
pub fn spectrum_from_state(a: &[f64], s: &NeumannState) -> Result<SpectralData> {
    s.check_on_manifold(MANIFOLD_TOL)?;
    let inv = invariants_from_state(a, s)?;
    let g = a.len() - 1;
    if let Some((index, &m)) = inv
        .m
        .iter()
        .enumerate()
        .find(|(_, m)| m.abs() < DEGENERATE_M)
    {
        return Err(Error::DegenerateSpectrum { index, m });
    }
    if inv.c.len() != g {
        return Err(Error::ComplexRoots {
            what: "Q",
            found: inv.c.len(),
            expected: g,
        });
    }
    for (which, lead) in [("U", inv.u.leading()), ("Q", inv.q_poly.leading())] {
        if (lead - 1.0).abs() > DEGREE_DROP_TOL {
            return Err(Error::DegreeDrop {
                which,
                residual: (lead - 1.0).abs(),
            });
        }
    }
    let curve = Arc::new(CurveSpec::new(a.to_vec(), inv.c.clone())?);
    let triple = MumfordTriple::new(Arc::clone(&curve), inv.u, inv.v)?;
    let divisibility = triple.divisibility_residual();
    if divisibility > DIVISIBILITY_TOL {
        return Err(Error::NotDivisible {
            residual: divisibility,
        });
    }
    let from_curve = curve.uhlenbeck_m();
    let m_vs_curve = inv
        .m
        .iter()
        .zip(&from_curve)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut residuals = BTreeMap::new();
    residuals.insert("divisibility".to_string(), divisibility);
    residuals.insert("m_vs_curve".to_string(), m_vs_curve);
    residuals.insert(
        "sum_m".to_string(),
        (inv.m.iter().sum::<f64>() - 1.0).abs(),
    );
    residuals.insert(
        "energy".to_string(),
        (curve.hamiltonian() - neumann::hamiltonian(a, s)).abs(),
    );
    Ok(SpectralData {
        curve,
        triple,
        m: inv.m,
        residuals,
    })
}

impl SpectralData {
    /// Spectral data for a triple given directly; `m` comes from the curve.
    pub fn from_triple(triple: MumfordTriple) -> Result<Self> {
        let divisibility = triple.divisibility_residual();
        if divisibility > DIVISIBILITY_TOL {
            return Err(Error::NotDivisible {
                residual: divisibility,
            });
        }
        let curve = Arc::clone(triple.curve_arc());
        let m = curve.uhlenbeck_m();
        if let Some((index, &m)) = m.iter().enumerate().find(|(_, m)| m.abs() < DEGENERATE_M) {
            return Err(Error::DegenerateSpectrum { index, m });
        }
        let mut residuals = BTreeMap::new();
        residuals.insert("divisibility".to_string(), divisibility);
        Ok(SpectralData {
            curve,
            triple,
            m,
            residuals,
        })
    }
}

/// Both evolutions from one initial state and their disagreement.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripReport {
    pub direct: Trajectory,
    pub algebraic: Trajectory,
    /// Sup-norm of `q_direct - q_algebraic` over all samples.
    pub max_q_diff: f64,
    pub max_qdot_diff: f64,
    pub direct_drift: BTreeMap<String, f64>,
    pub algebraic_drift: BTreeMap<String, f64>,
}

/// Flow the triple at a spacing fine enough for branch tracking and keep
/// the samples that fall on the `dt_out` grid.
pub fn algebraic_trajectory(
    spectrum: &SpectralData,
    tracker: SignTracker,
    t_end: f64,
    dt_out: f64,
    rtol: f64,
) -> Result<(Trajectory, Vec<(f64, MumfordTriple)>)> {
    let refine = (dt_out / TRACKING_STEP).ceil().max(1.0) as usize;
    let fine_dt = dt_out / refine as f64;
    let fine = mumford::integrate_flow(&spectrum.triple, t_end, fine_dt, rtol)?;
    let tracked = alfn::track_along(&fine, tracker)?;
    let coarse = crate::ode::sample_times(t_end, dt_out).len();
    let keep: Vec<usize> = (0..coarse)
        .map(|k| if k + 1 == coarse { fine.len() - 1 } else { k * refine })
        .collect();
    let mut traj = Trajectory::default();
    let mut triples = Vec::with_capacity(keep.len());
    for k in keep {
        traj.times.push(tracked.times[k]);
        traj.states.push(tracked.states[k].clone());
        traj.residuals.push(tracked.residuals[k].clone());
        triples.push(fine[k].clone());
    }
    Ok((traj, triples))
}

pub fn roundtrip(a: &[f64], s: &NeumannState, t_end: f64, rtol: f64) -> Result<RoundtripReport> {
    roundtrip_sampled(a, s, t_end, DEFAULT_DT_OUT, rtol)
}

pub fn roundtrip_sampled(
    a: &[f64],
    s: &NeumannState,
    t_end: f64,
    dt_out: f64,
    rtol: f64,
) -> Result<RoundtripReport> {
    let spectrum = spectrum_from_state(a, s)?;
    if !spectrum.curve.is_interlaced() {
        return Err(Error::NotInterlaced);
    }
    let direct = neumann::integrate(a, s, t_end, dt_out, rtol)?;
    let (algebraic, _) =
        algebraic_trajectory(&spectrum, SignTracker::from_state(s), t_end, dt_out, rtol)?;
    let (max_q_diff, max_qdot_diff) = direct.sup_distance(&algebraic)?;
    let direct_drift = conserved_report(&direct, a)?;
    let algebraic_drift = conserved_report(&algebraic, a)?;
    Ok(RoundtripReport {
        direct,
        algebraic,
        max_q_diff,
        max_qdot_diff,
        direct_drift,
        algebraic_drift,
    })
}

/// Round trips for many systems, in parallel when `exec` allows it.
pub fn roundtrip_batch(
    systems: &[(Vec<f64>, NeumannState)],
    t_end: f64,
    dt_out: f64,
    rtol: f64,
    exec: Execution,
) -> Vec<Result<RoundtripReport>> {
    exec::map(exec, systems, |(a, s)| roundtrip_sampled(a, s, t_end, dt_out, rtol))
}

struct SampleInvariants {
    h: f64,
    m: Vec<f64>,
    c: Vec<f64>,
    sum_am: f64,
}

/// Largest drift of each conserved quantity from its value at the first sample.
///
/// Keys: `H`, `m_i`, `c_i` (only when every sample has `g` real roots of
/// `Q`), `sum_m` (`|sum m - 1|`) and `sum_am_2h` (`|sum a_i m_i - 2 H|` at each sample).
pub fn conserved_report(traj: &Trajectory, a: &[f64]) -> Result<BTreeMap<String, f64>> {
    conserved_report_with(traj, a, Execution::default())
}

pub fn conserved_report_with(
    traj: &Trajectory,
    a: &[f64],
    exec: Execution,
) -> Result<BTreeMap<String, f64>> {
    let mut report = BTreeMap::new();
    if traj.is_empty() {
        return Ok(report);
    }
    let per_sample: Vec<Result<SampleInvariants>> = exec::map(exec, &traj.states, |s| {
        let inv = invariants_from_state(a, s)?;
        let sum_am = a.iter().zip(&inv.m).map(|(ai, mi)| ai * mi).sum();
        Ok(SampleInvariants {
            h: neumann::hamiltonian(a, s),
            m: inv.m,
            c: inv.c,
            sum_am,
        })
    });
    let samples: Vec<SampleInvariants> = per_sample.into_iter().collect::<Result<_>>()?;
    let first = &samples[0];
    let g = a.len() - 1;
    let track_c = samples.iter().all(|s| s.c.len() == g);

    let mut bump = |key: String, value: f64| {
        let e = report.entry(key).or_insert(0.0_f64);
        *e = e.max(value);
    };
    for s in &samples {
        bump("H".to_string(), (s.h - first.h).abs());
        for (i, (m, m0)) in s.m.iter().zip(&first.m).enumerate() {
            bump(format!("m_{}", i + 1), (m - m0).abs());
        }
        if track_c {
            for (i, (c, c0)) in s.c.iter().zip(&first.c).enumerate() {
                bump(format!("c_{}", i + 1), (c - c0).abs());
            }
        }
        bump("sum_m".to_string(), (s.m.iter().sum::<f64>() - 1.0).abs());
        bump("sum_am_2h".to_string(), (s.sum_am - 2.0 * s.h).abs());
    }
    Ok(report)
}

/// Worst value of every identity residual across a sampled flow.
pub fn identity_sweep(
    samples: &[(f64, MumfordTriple)],
    exec: Execution,
) -> Result<BTreeMap<String, f64>> {
    let per_sample = exec::map(exec, samples, |(_, t)| alfn::identity_residuals(t));
    let mut worst = BTreeMap::new();
    for r in per_sample {
        for (k, v) in r?.values {
            let e = worst.entry(k).or_insert(0.0_f64);
            *e = e.max(v);
        }
    }
    Ok(worst)
}
