//! Dense univariate polynomials over `f64`.
//!
//! Coefficients are stored in ascending degree order and trimmed after every
//! operation: trailing entries below `1e-13 * max|coeff|` are dropped, so the
//! leading coefficient is nonzero unless the polynomial is identically zero.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const TRIM_REL: f64 = 1e-13;
const ABERTH_MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Build from ascending coefficients, trimming negligible leading terms.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly::new(vec![0.0, 1.0])
    }

    /// `prod (x - r)` over the given roots.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut coeffs = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= r * c;
            }
            coeffs = next;
        }
        Poly::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^k`; zero beyond the stored degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    fn trim(&mut self) {
        let tol = TRIM_REL * self.max_abs();
        while let Some(&last) = self.coeffs.last() {
            if last.abs() <= tol {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn eval_complex(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// `sum |c_k| |x|^k`, the natural magnitude against which `|p(x)|` is judged.
    pub fn eval_scale(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * ax + c.abs())
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// Drop every coefficient above `degree`, returning the largest dropped magnitude.
    pub fn truncate(&self, degree: usize) -> (Poly, f64) {
        let dropped = self
            .coeffs
            .iter()
            .skip(degree + 1)
            .fold(0.0_f64, |m, c| m.max(c.abs()));
        let kept = self.coeffs.iter().take(degree + 1).copied().collect();
        (Poly::new(kept), dropped)
    }

    /// Euclidean division. A nonzero remainder is returned, never treated as an error.
    pub fn divmod(&self, d: &Poly) -> Result<(Poly, Poly)> {
        if d.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let n = self.coeffs.len();
        let m = d.coeffs.len();
        if n < m {
            return Ok((Poly::zero(), self.clone()));
        }
        let lead = d.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; n - m + 1];
        for k in (0..quot.len()).rev() {
            let q = rem[k + m - 1] / lead;
            quot[k] = q;
            for (j, &dc) in d.coeffs.iter().enumerate() {
                rem[k + j] -= q * dc;
            }
            rem[k + m - 1] = 0.0;
        }
        rem.truncate(m - 1);
        Ok((Poly::new(quot), Poly::new(rem)))
    }

    /// Lagrange interpolation through `(nodes[i], values[i])`.
    pub fn interpolate(nodes: &[f64], values: &[f64]) -> Result<Poly> {
        if nodes.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "interpolation values",
                expected: nodes.len(),
                found: values.len(),
            });
        }
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if nodes[i] == nodes[j] {
                    return Err(Error::DuplicateNodes { i, j });
                }
            }
        }
        let n = nodes.len();
        let mut acc = vec![0.0; n.max(1)];
        for i in 0..n {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| nodes[j]).collect();
            let basis = Poly::from_roots(&others);
            let denom: f64 = others.iter().map(|&xj| nodes[i] - xj).product();
            let w = values[i] / denom;
            for (k, &c) in basis.coeffs.iter().enumerate() {
                acc[k] += w * c;
            }
        }
        Ok(Poly::new(acc))
    }

    /// Real roots in ascending order, repeated by multiplicity.
    ///
    /// All complex roots are located with Aberth–Ehrlich iteration; those on the
    /// real axis are then Newton-polished on the real line.
    pub fn real_roots(&self) -> Result<Vec<f64>> {
        if self.is_zero() || self.degree() < 1 {
            return Err(Error::DegreeTooLow {
                what: "root-finding input",
                min: 1,
            });
        }
        if self.degree() == 1 {
            return Ok(vec![-self.coeffs[0] / self.coeffs[1]]);
        }
        let zs = self.aberth()?;
        let mut roots: Vec<f64> = zs
            .into_iter()
            .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.norm()))
            .filter_map(|z| {
                let x = self.polish(z.re);
                let tol = 1e-12 * self.eval_scale(x).max(f64::MIN_POSITIVE);
                (self.eval(x).abs() <= tol).then_some(x)
            })
            .collect();
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }

    fn aberth(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        let lead = self.leading();
        let monic = self.scale(1.0 / lead);
        let center = -monic.coeff(n - 1) / n as f64;
        let radius = (0..n)
            .map(|k| monic.coeff(k).abs().powf(1.0 / (n - k) as f64))
            .fold(0.0_f64, f64::max)
            .max(1e-3);
        let mut zs: Vec<Complex64> = (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
                Complex64::new(center, 0.0) + Complex64::from_polar(radius, theta)
            })
            .collect();

        // an approximation is frozen once |p(z)| is down to the rounding level
        let floor = 8.0 * n as f64 * f64::EPSILON;
        let mut done = vec![false; n];
        for _ in 0..ABERTH_MAX_SWEEPS {
            for k in 0..n {
                if done[k] {
                    continue;
                }
                let (p, dp) = monic.eval_complex(zs[k]);
                if p.norm() <= floor * monic.eval_scale(zs[k].norm()) {
                    done[k] = true;
                    continue;
                }
                let repulsion: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| (zs[k] - zs[j]).inv())
                    .sum();
                let ratio = if dp.norm() == 0.0 {
                    Complex64::new(1e-8 * (1.0 + zs[k].norm()), 0.0)
                } else {
                    p / dp
                };
                let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
                if !step.is_finite() {
                    continue;
                }
                zs[k] -= step;
                if step.norm() <= 1e-14 * (1.0 + zs[k].norm()) {
                    done[k] = true;
                }
            }
            if done.iter().all(|&d| d) {
                return Ok(zs);
            }
        }
        Err(Error::RootsDidNotConverge {
            degree: n,
            iterations: ABERTH_MAX_SWEEPS,
        })
    }

    fn polish(&self, x0: f64) -> f64 {
        let dp = self.derivative();
        let mut x = x0;
        let mut best = (self.eval(x).abs(), x);
        for _ in 0..60 {
            let d = dp.eval(x);
            if d == 0.0 {
                break;
            }
            let step = self.eval(x) / d;
            x -= step;
            let r = self.eval(x).abs();
            if r < best.0 {
                best = (r, x);
            }
            if r == 0.0 || step.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        best.1
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($($tr:ident :: $f:ident),*) => {$(
        impl $tr for Poly {
            type Output = Poly;
            fn $f(self, rhs: Poly) -> Poly {
                (&self).$f(&rhs)
            }
        }
    )*};
}
forward_owned!(Add::add, Sub::sub, Mul::mul);
