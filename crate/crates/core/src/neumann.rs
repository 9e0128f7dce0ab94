//! Direct dynamics: a particle on the unit sphere in `R^{g+1}` with potential
//! `(1/2) sum a_i q_i^2`, integrated as a constrained second-order system.

use std::collections::BTreeMap;

use rand::Rng;

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::ode::{sample_times, Dopri5, Tolerances};

/// Tolerance on `|Phi|` and `|Phi_dot|` for a state to count as on-manifold.
pub const MANIFOLD_TOL: f64 = 1e-9;
/// Beyond this the vector field refuses to evaluate.
pub const OFF_MANIFOLD_LIMIT: f64 = 1e-6;
pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl NeumannState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::LengthMismatch {
                what: "qdot",
                expected: q.len(),
                found: qdot.len(),
            });
        }
        if q.iter().chain(&qdot).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "state" });
        }
        Ok(NeumannState { q, qdot })
    }

    /// Sphere pole `e_i` at rest.
    pub fn pole(dim: usize, i: usize) -> Self {
        let mut q = vec![0.0; dim];
        q[i] = 1.0;
        NeumannState {
            q,
            qdot: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `(|sum q^2 - 1|, |sum q qdot|)`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let phi = self.q.iter().map(|x| x * x).sum::<f64>() - 1.0;
        let phi_dot: f64 = self.q.iter().zip(&self.qdot).map(|(a, b)| a * b).sum();
        (phi.abs(), phi_dot.abs())
    }

    pub fn check_on_manifold(&self, tol: f64) -> Result<()> {
        let (phi, phi_dot) = self.constraint_residuals();
        if phi > tol || phi_dot > tol {
            return Err(Error::OffManifold { phi, phi_dot });
        }
        Ok(())
    }

    /// Normalize `q` and strip the radial part of `qdot`; returns the largest
    /// coordinate change.
    pub fn project(&mut self) -> f64 {
        project_slices(&mut self.q, &mut self.qdot)
    }

    /// Same configuration moving backwards.
    pub fn reversed(&self) -> Self {
        NeumannState {
            q: self.q.clone(),
            qdot: self.qdot.iter().map(|v| -v).collect(),
        }
    }

    /// Random state with `q` uniform on the sphere and a tangent velocity of
    /// norm `speed` in a uniformly random direction.
    pub fn random<R: Rng + ?Sized>(dim: usize, speed: f64, rng: &mut R) -> Self {
        let q = loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        let qdot = loop {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let radial: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(&q).for_each(|(x, qi)| *x -= radial * qi);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-3 {
                break v.into_iter().map(|x| speed * x / n).collect::<Vec<_>>();
            }
        };
        let mut s = NeumannState { q, qdot };
        s.project();
        s
    }
}

fn project_slices(q: &mut [f64], qdot: &mut [f64]) -> f64 {
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut moved = 0.0_f64;
    for x in q.iter_mut() {
        let nx = *x / norm;
        moved = moved.max((nx - *x).abs());
        *x = nx;
    }
    let radial: f64 = q.iter().zip(qdot.iter()).map(|(a, b)| a * b).sum();
    for (v, x) in qdot.iter_mut().zip(q.iter()) {
        let dv = radial * x;
        moved = moved.max(dv.abs());
        *v -= dv;
    }
    moved
}

/// Time-indexed states with per-sample named residuals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NeumannState>,
    pub residuals: Vec<BTreeMap<String, f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest value of a named residual over all samples.
    pub fn max_residual(&self, name: &str) -> Option<f64> {
        self.residuals
            .iter()
            .filter_map(|r| r.get(name).copied())
            .reduce(f64::max)
    }

    /// Sup-norm distance between positions and between velocities, sample by sample.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<(f64, f64)> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                what: "trajectory samples",
                expected: self.len(),
                found: other.len(),
            });
        }
        let mut dq = 0.0_f64;
        let mut dv = 0.0_f64;
        for (s, o) in self.states.iter().zip(&other.states) {
            for i in 0..s.dim() {
                dq = dq.max((s.q[i] - o.q[i]).abs());
                dv = dv.max((s.qdot[i] - o.qdot[i]).abs());
            }
        }
        Ok((dq, dv))
    }
}

fn check_dims(a: &[f64], s: &NeumannState) -> Result<()> {
    if a.len() != s.dim() {
        return Err(Error::LengthMismatch {
            what: "state dimension",
            expected: a.len(),
            found: s.dim(),
        });
    }
    Ok(())
}

/// Rejects repeated coupling constants, naming both offending indices.
pub fn validate_couplings(a: &[f64]) -> Result<()> {
    if a.len() < 2 {
        return Err(Error::LengthMismatch {
            what: "coupling constants a (need g + 1 >= 2)",
            expected: 2,
            found: a.len(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "a" });
    }
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            let gap = (a[i] - a[j]).abs();
            if gap <= crate::curve::MIN_BRANCH_GAP {
                return Err(Error::CoincidentBranchPoints {
                    first: format!("a[{i}]"),
                    second: format!("a[{j}]"),
                    gap,
                });
            }
        }
    }
    Ok(())
}

pub fn lagrangian(a: &[f64], s: &NeumannState) -> f64 {
    let kinetic: f64 = s.qdot.iter().map(|v| v * v).sum();
    let potential: f64 = a.iter().zip(&s.q).map(|(ai, qi)| ai * qi * qi).sum();
    0.5 * kinetic - 0.5 * potential
}

pub fn hamiltonian(a: &[f64], s: &NeumannState) -> f64 {
    let kinetic: f64 = s.qdot.iter().map(|v| v * v).sum();
    let potential: f64 = a.iter().zip(&s.q).map(|(ai, qi)| ai * qi * qi).sum();
    0.5 * kinetic + 0.5 * potential
}

fn accel_hamiltonian_form(a: &[f64], q: &[f64], qdot: &[f64], out: &mut [f64]) {
    let multiplier: f64 = (0..q.len())
        .map(|j| a[j] * q[j] * q[j] - qdot[j] * qdot[j])
        .sum();
    for i in 0..q.len() {
        out[i] = -a[i] * q[i] + q[i] * multiplier;
    }
}

/// `(dq, dqdot)` from the Hamiltonian vector field: `dqdot_i = -a_i q_i + q_i sum_j (a_j q_j^2 - qdot_j^2)`.
pub fn vector_field(a: &[f64], s: &NeumannState) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(a, s)?;
    s.check_on_manifold(OFF_MANIFOLD_LIMIT)?;
    let mut acc = vec![0.0; s.dim()];
    accel_hamiltonian_form(a, &s.q, &s.qdot, &mut acc);
    Ok((s.qdot.clone(), acc))
}

/// The same acceleration written through the Lagrangian: `qddot_i = -(2L + a_i) q_i`.
pub fn acceleration_lagrangian_form(a: &[f64], s: &NeumannState) -> Vec<f64> {
    let two_l = 2.0 * lagrangian(a, s);
    a.iter()
        .zip(&s.q)
        .map(|(ai, qi)| -(two_l + ai) * qi)
        .collect()
}

/// Integrate with Dormand–Prince 5(4), projecting back onto the constraint
/// manifold after every accepted step, and sample at multiples of `dt_out`.
///
/// Each sample records `phi`, `phi_dot` and the largest `projection`
/// displacement applied since the previous sample.
pub fn integrate(
    a: &[f64],
    s0: &NeumannState,
    t_end: f64,
    dt_out: f64,
    rtol: f64,
) -> Result<Trajectory> {
    check_dims(a, s0)?;
    check_run_args(t_end, dt_out, rtol)?;
    s0.check_on_manifold(MANIFOLD_TOL)?;

    let n = s0.dim();
    let mut y: Vec<f64> = s0.q.iter().chain(&s0.qdot).copied().collect();
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (q, qdot) = y.split_at(n);
        let (dq, dqdot) = dy.split_at_mut(n);
        dq.copy_from_slice(qdot);
        accel_hamiltonian_form(a, q, qdot, dqdot);
    };
    let mut project = |y: &mut [f64]| {
        let (q, qdot) = y.split_at_mut(n);
        project_slices(q, qdot)
    };
    let mut solver = Dopri5::new(2 * n, Tolerances::new(rtol, DEFAULT_ATOL));

    let times = sample_times(t_end, dt_out);
    let mut traj = Trajectory::default();
    let mut t_prev = 0.0;
    for &t in &times {
        let displacement = solver.advance(&mut rhs, &mut project, t_prev, &mut y, t)?;
        t_prev = t;
        let state = NeumannState {
            q: y[..n].to_vec(),
            qdot: y[n..].to_vec(),
        };
        let (phi, phi_dot) = state.constraint_residuals();
        let mut res = BTreeMap::new();
        res.insert("phi".to_string(), phi);
        res.insert("phi_dot".to_string(), phi_dot);
        res.insert("projection".to_string(), displacement);
        traj.times.push(t);
        traj.states.push(state);
        traj.residuals.push(res);
    }
    Ok(traj)
}

pub(crate) fn check_run_args(t_end: f64, dt_out: f64, rtol: f64) -> Result<()> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be >= 0, got {t_end}")));
    }
    if !(dt_out.is_finite() && dt_out > 0.0) {
        return Err(Error::InvalidArgument(format!("dt_out must be > 0, got {dt_out}")));
    }
    if !(1e-13..=1e-6).contains(&rtol) {
        return Err(Error::InvalidArgument(format!(
            "rtol must lie in [1e-13, 1e-6], got {rtol}"
        )));
    }
    Ok(())
}

/// Uhlenbeck constants `m_i = q_i^2 + sum_{j != i} (q_i qdot_j - q_j qdot_i)^2 / (a_i - a_j)`.
pub fn uhlenbeck_m(a: &[f64], s: &NeumannState) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| {
            let cross: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let l = s.q[i] * s.qdot[j] - s.q[j] * s.qdot[i];
                    l * l / (a[i] - a[j])
                })
                .sum();
            s.q[i] * s.q[i] + cross
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MRational {
    /// `sum_i m_i / (x - a_i)`.
    pub value: f64,
    /// `Q(x) / A(x)` from the supplied curve.
    pub curve_value: Option<f64>,
}

/// Partial-fraction generating function of the Uhlenbeck constants.
pub fn m_rational(
    a: &[f64],
    s: &NeumannState,
    x: f64,
    curve: Option<&CurveSpec>,
) -> Result<MRational> {
    check_dims(a, s)?;
    if let Some(index) = a.iter().position(|&ai| ai == x) {
        return Err(Error::Pole { index });
    }
    let m = uhlenbeck_m(a, s);
    let value = m.iter().zip(a).map(|(mi, ai)| mi / (x - ai)).sum();
    let curve_value = curve.map(|c| c.q().eval(x) / c.big_a().eval(x));
    Ok(MRational { value, curve_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A: [f64; 2] = [1.0, 3.0];

    fn e1() -> NeumannState {
        NeumannState::new(vec![0.6, 0.8], vec![-0.4, 0.3]).unwrap()
    }

    #[test]
    fn energies_e1() {
        assert!((lagrangian(&A, &e1()) + 1.015).abs() < 1e-12);
        assert!((hamiltonian(&A, &e1()) - 1.265).abs() < 1e-12);
        let pole = NeumannState::pole(2, 0);
        assert_eq!(lagrangian(&A, &pole), -0.5);
        assert_eq!(hamiltonian(&A, &pole), 0.5);
        let s = e1();
        let diff = hamiltonian(&A, &s) - lagrangian(&A, &s);
        assert!((diff - (0.36 + 3.0 * 0.64)).abs() < 1e-12);
    }

    #[test]
    fn vector_field_e1() {
        let (dq, acc) = vector_field(&A, &e1()).unwrap();
        assert_eq!(dq, vec![-0.4, 0.3]);
        assert!((acc[0] - 0.618).abs() < 1e-12);
        assert!((acc[1] + 0.776).abs() < 1e-12);
        let s = e1();
        let tangency: f64 = s.q.iter().zip(&acc).map(|(q, a)| q * a).sum::<f64>()
            + s.qdot.iter().map(|v| v * v).sum::<f64>();
        assert!(tangency.abs() < 1e-12);
        let other = acceleration_lagrangian_form(&A, &s);
        for (x, y) in acc.iter().zip(&other) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn vector_field_vanishes_at_pole() {
        let (dq, acc) = vector_field(&A, &NeumannState::pole(2, 0)).unwrap();
        assert!(dq.iter().chain(&acc).all(|v| v.abs() <= 1e-14));
    }

    #[test]
    fn vector_field_rejects_off_manifold() {
        let s = NeumannState::new(vec![0.6, 0.9], vec![0.0, 0.0]).unwrap();
        assert!(matches!(vector_field(&A, &s), Err(Error::OffManifold { .. })));
    }

    #[test]
    fn uhlenbeck_e1() {
        let m = uhlenbeck_m(&A, &e1());
        assert!((m[0] - 0.235).abs() < 1e-12);
        assert!((m[1] - 0.765).abs() < 1e-12);
        let rest = NeumannState::new(vec![0.6, 0.8], vec![0.0, 0.0]).unwrap();
        let m = uhlenbeck_m(&A, &rest);
        assert!((m[0] - 0.36).abs() < 1e-15 && (m[1] - 0.64).abs() < 1e-15);
    }

    #[test]
    fn m_rational_e1() {
        let curve = CurveSpec::new(A.to_vec(), vec![1.47]).unwrap();
        let r = m_rational(&A, &e1(), 0.0, Some(&curve)).unwrap();
        assert!((r.value + 0.49).abs() < 1e-12);
        assert!((r.curve_value.unwrap() + 0.49).abs() < 1e-12);
        let r = m_rational(&A, &e1(), 2.0, Some(&curve)).unwrap();
        assert!((r.value + 0.53).abs() < 1e-12);
        assert!((r.curve_value.unwrap() + 0.53).abs() < 1e-12);
        let x = 1e8;
        let r = m_rational(&A, &e1(), x, None).unwrap();
        assert!((x * r.value - 1.0).abs() < 1e-7);
        assert_eq!(m_rational(&A, &e1(), 3.0, None), Err(Error::Pole { index: 1 }));
    }

    #[test]
    fn integrate_conserves_energy_e1() {
        let traj = integrate(&A, &e1(), 5.0, 0.05, 1e-10).unwrap();
        let reference = integrate(&A, &e1(), 5.0, 0.05, 1e-12).unwrap();
        for (s, r) in traj.states.iter().zip(&reference.states) {
            assert!((hamiltonian(&A, s) - 1.265).abs() <= 1e-8);
            assert!((hamiltonian(&A, r) - 1.265).abs() <= 1e-8);
        }
        assert!(traj.max_residual("phi").unwrap() <= MANIFOLD_TOL);
        assert!(traj.max_residual("phi_dot").unwrap() <= MANIFOLD_TOL);
    }

    #[test]
    fn integrate_equilibrium_is_constant() {
        let pole = NeumannState::pole(2, 1);
        let traj = integrate(&A, &pole, 3.0, 0.5, 1e-10).unwrap();
        assert!(traj.states.iter().all(|s| *s == pole));
    }

    #[test]
    fn integrate_is_time_reversible() {
        let fwd = integrate(&A, &e1(), 4.0, 4.0, 1e-11).unwrap();
        let end = fwd.states.last().unwrap().reversed();
        let back = integrate(&A, &end, 4.0, 4.0, 1e-11).unwrap();
        let home = back.states.last().unwrap().reversed();
        for (x, y) in home.q.iter().chain(&home.qdot).zip(e1().q.iter().chain(&e1().qdot)) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn integrate_validates_arguments() {
        assert!(integrate(&A, &e1(), 1.0, 0.1, 1e-3).is_err());
        assert!(integrate(&A, &e1(), -1.0, 0.1, 1e-10).is_err());
        assert!(integrate(&A, &e1(), 1.0, 0.0, 1e-10).is_err());
        let off = NeumannState::new(vec![0.6, 0.8001], vec![0.0, 0.0]).unwrap();
        assert!(integrate(&A, &off, 1.0, 0.1, 1e-10).is_err());
        assert_eq!(integrate(&A, &e1(), 0.0, 0.1, 1e-10).unwrap().len(), 1);
    }

    #[test]
    fn invariants_along_genus_two_flow() {
        let a = [1.0, 2.0, 4.0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s0 = NeumannState::random(3, 0.7, &mut rng);
        let traj = integrate(&a, &s0, 10.0, 0.1, 1e-10).unwrap();
        let h0 = hamiltonian(&a, &s0);
        let m0 = uhlenbeck_m(&a, &s0);
        for s in &traj.states {
            assert!((hamiltonian(&a, s) - h0).abs() <= 1e-8);
            for (m, m0) in uhlenbeck_m(&a, s).iter().zip(&m0) {
                assert!((m - m0).abs() <= 1e-7);
            }
            let (phi, phi_dot) = s.constraint_residuals();
            assert!(phi <= 1e-9 && phi_dot <= 1e-9);
            let sum_am: f64 = a.iter().zip(uhlenbeck_m(&a, s)).map(|(a, m)| a * m).sum();
            assert!((sum_am - 2.0 * hamiltonian(&a, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_couplings_named() {
        let err = validate_couplings(&[1.0, 2.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("a[0]") && err.to_string().contains("a[2]"));
    }

    proptest! {
        #[test]
        fn both_acceleration_forms_agree(seed in any::<u64>(), speed in 0.0..3.0f64) {
            let a = [0.5, 1.7, 2.2, 4.0];
            let s = NeumannState::random(4, speed, &mut ChaCha8Rng::seed_from_u64(seed));
            let (_, acc) = vector_field(&a, &s).unwrap();
            let other = acceleration_lagrangian_form(&a, &s);
            let scale = acc.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            for (x, y) in acc.iter().zip(&other) {
                prop_assert!((x - y).abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn uhlenbeck_sum_is_one(seed in any::<u64>(), speed in 0.0..3.0f64) {
            let a = [0.5, 1.7, 2.2];
            let s = NeumannState::random(3, speed, &mut ChaCha8Rng::seed_from_u64(seed));
            let m = uhlenbeck_m(&a, &s);
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let sum_am: f64 = a.iter().zip(&m).map(|(a, m)| a * m).sum();
            prop_assert!((sum_am - 2.0 * hamiltonian(&a, &s)).abs() < 1e-11);
        }
    }
}
