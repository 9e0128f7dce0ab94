//! Spectral curve `y^2 = f(x) = A(x) Q(x)` with `A = prod (x - a_i)` over the
//! `g + 1` coupling constants and `Q = prod (x - c_j)` over the `g` motion
//! dependent branch points.

use crate::error::{Error, Result};
use crate::poly::Poly;

/// Minimum separation between any two of the `2g + 1` branch points.
pub const MIN_BRANCH_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    a: Vec<f64>,
    c: Vec<f64>,
    big_a: Poly,
    q: Poly,
    f: Poly,
    beta: f64,
    aprime: Vec<f64>,
    gamma_sq: Vec<f64>,
}

impl CurveSpec {
    pub fn new(a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.len() < 2 {
            return Err(Error::LengthMismatch {
                what: "coupling constants a (need g + 1 >= 2)",
                expected: 2,
                found: a.len(),
            });
        }
        if c.len() + 1 != a.len() {
            return Err(Error::LengthMismatch {
                what: "branch points c",
                expected: a.len() - 1,
                found: c.len(),
            });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "a" });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "c" });
        }

        let labelled: Vec<(String, f64)> = a
            .iter()
            .enumerate()
            .map(|(i, &x)| (format!("a[{i}]"), x))
            .chain(c.iter().enumerate().map(|(j, &x)| (format!("c[{j}]"), x)))
            .collect();
        for (i, (li, xi)) in labelled.iter().enumerate() {
            for (lj, xj) in &labelled[i + 1..] {
                let gap = (xi - xj).abs();
                if gap <= MIN_BRANCH_GAP {
                    return Err(Error::CoincidentBranchPoints {
                        first: li.clone(),
                        second: lj.clone(),
                        gap,
                    });
                }
            }
        }

        let big_a = Poly::from_roots(&a);
        let q = Poly::from_roots(&c);
        let f = &big_a * &q;
        let beta = a.iter().sum::<f64>() + c.iter().sum::<f64>();
        let da = big_a.derivative();
        let aprime: Vec<f64> = a.iter().map(|&x| da.eval(x)).collect();
        let gamma_sq = aprime.iter().map(|d| 1.0 / d).collect();
        Ok(CurveSpec {
            a,
            c,
            big_a,
            q,
            f,
            beta,
            aprime,
            gamma_sq,
        })
    }

    pub fn genus(&self) -> usize {
        self.c.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// `A(x) = prod (x - a_i)`.
    pub fn big_a(&self) -> &Poly {
        &self.big_a
    }

    /// `Q(x) = prod (x - c_j)`.
    pub fn q(&self) -> &Poly {
        &self.q
    }

    pub fn f(&self) -> &Poly {
        &self.f
    }

    /// Sum of all branch points, `-[x^{2g}] f`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `A'(a_i)` for each coupling constant.
    pub fn aprime(&self) -> &[f64] {
        &self.aprime
    }

    /// `gamma_i^2 = 1 / A'(a_i)`.
    pub fn gamma_sq(&self) -> &[f64] {
        &self.gamma_sq
    }

    /// True iff `a_1 < c_1 < a_2 < ... < c_g < a_{g+1}` after sorting.
    pub fn is_interlaced(&self) -> bool {
        let mut a = self.a.clone();
        let mut c = self.c.clone();
        a.sort_by(f64::total_cmp);
        c.sort_by(f64::total_cmp);
        c.iter()
            .enumerate()
            .all(|(j, &cj)| a[j] < cj && cj < a[j + 1])
    }

    /// Energy fixed by the curve alone: `(sum a - sum c) / 2`.
    pub fn hamiltonian(&self) -> f64 {
        0.5 * (self.a.iter().sum::<f64>() - self.c.iter().sum::<f64>())
    }

    /// `Q(a_i) / A'(a_i)`, the Uhlenbeck constants this curve carries.
    pub fn uhlenbeck_m(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.aprime)
            .map(|(&ai, &d)| self.q.eval(ai) / d)
            .collect()
    }
}

pub fn make_curve(a: &[f64], c: &[f64]) -> Result<CurveSpec> {
    CurveSpec::new(a.to_vec(), c.to_vec())
}

pub fn is_interlaced(spec: &CurveSpec) -> bool {
    spec.is_interlaced()
}

pub fn hamiltonian_from_curve(spec: &CurveSpec) -> f64 {
    spec.hamiltonian()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn e1_curve() {
        let s = make_curve(&[1.0, 3.0], &[1.47]).unwrap();
        let want = [-4.41, 8.88, -5.47, 1.0];
        for (c, w) in s.f().coeffs().iter().zip(want) {
            assert!((c - w).abs() < 1e-12);
        }
        assert!((s.beta() - 5.47).abs() < 1e-15);
        assert_eq!(s.aprime(), &[-2.0, 2.0]);
        assert!(s.is_interlaced());
        assert!((s.hamiltonian() - 1.265).abs() < 1e-15);
    }

    #[test]
    fn duplicate_branch_point_rejected() {
        let err = make_curve(&[1.0, 3.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::CoincidentBranchPoints { ref first, ref second, .. }
            if first == "a[0]" && second == "c[0]"));
        assert!(make_curve(&[1.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(make_curve(&[1.0, f64::NAN], &[2.0]).is_err());
    }

    #[test]
    fn genus_two_curve() {
        let s = make_curve(&[1.0, 2.0, 4.0], &[1.5, 3.0]).unwrap();
        assert_eq!(s.genus(), 2);
        assert!((s.beta() - 11.5).abs() < 1e-15);
        assert!(s.is_interlaced());
        assert!(!make_curve(&[1.0, 3.0], &[5.0]).unwrap().is_interlaced());
        assert!((make_curve(&[1.0, 3.0], &[2.0]).unwrap().hamiltonian() - 1.0).abs() < 1e-15);
    }

    fn interlaced_spec() -> impl Strategy<Value = CurveSpec> {
        (1usize..=4)
            .prop_flat_map(|g| {
                (
                    -3.0..3.0f64,
                    prop::collection::vec(0.05..2.0f64, 2 * g),
                    prop::collection::vec(0.1..0.9f64, g),
                )
            })
            .prop_map(|(start, gaps, fracs)| {
                let g = fracs.len();
                let mut a = vec![start];
                for k in 0..g {
                    let last = *a.last().unwrap();
                    a.push(last + gaps[2 * k] + gaps[2 * k + 1]);
                }
                let c: Vec<f64> = (0..g).map(|j| a[j] + fracs[j] * (a[j + 1] - a[j])).collect();
                CurveSpec::new(a, c).unwrap()
            })
    }

    proptest! {
        #[test]
        fn f_vanishes_at_branch_points(spec in interlaced_spec()) {
            for &b in spec.a().iter().chain(spec.c()) {
                prop_assert!(spec.f().eval(b).abs() <= 1e-10 * spec.f().eval_scale(b));
            }
            let lead = spec.f().coeff(2 * spec.genus());
            prop_assert!((-lead - spec.beta()).abs() <= 1e-12 * spec.beta().abs().max(1.0));
        }

        #[test]
        fn hamiltonian_ignores_c_order(spec in interlaced_spec()) {
            let mut c = spec.c().to_vec();
            c.reverse();
            let flipped = CurveSpec::new(spec.a().to_vec(), c).unwrap();
            prop_assert!((flipped.hamiltonian() - spec.hamiltonian()).abs() < 1e-14);
        }

        #[test]
        fn interlaced_curves_have_positive_m(spec in interlaced_spec()) {
            prop_assert!(spec.uhlenbeck_m().iter().all(|&m| m > 0.0));
        }
    }
}
