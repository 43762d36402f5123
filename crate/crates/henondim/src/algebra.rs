//! Composed Henon maps of C^2 and their exact algebra: evaluation, inverses,
//! Jacobian cocycles, and the escape radius for the standard filtration.
//!
//! A factor is g(z, w) = (w, P(w) + a z) with deg P >= 2 and a != 0. A map is a
//! composition g_1 ∘ ... ∘ g_m, stored as the factor list [g_1, ..., g_m] and
//! applied right to left.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, MAGNITUDE_CAP};

/// Point of C^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointC2 {
    pub z: Complex64,
    pub w: Complex64,
}

impl PointC2 {
    pub fn new(z: Complex64, w: Complex64) -> Self {
        Self { z, w }
    }

    pub fn from_re(z: f64, w: f64) -> Self {
        Self::new(Complex64::new(z, 0.0), Complex64::new(w, 0.0))
    }

    /// Euclidean norm on C^2 = R^4.
    pub fn norm(&self) -> f64 {
        (self.z.norm_sqr() + self.w.norm_sqr()).sqrt()
    }

    /// max(|z|, |w|); the bidisk of radius R is { sup_norm <= R }.
    pub fn sup_norm(&self) -> f64 {
        self.z.norm().max(self.w.norm())
    }

    pub fn dist(&self, other: &PointC2) -> f64 {
        ((self.z - other.z).norm_sqr() + (self.w - other.w).norm_sqr()).sqrt()
    }

    /// Coordinates as (Re z, Im z, Re w, Im w).
    pub fn coords(&self) -> [f64; 4] {
        [self.z.re, self.z.im, self.w.re, self.w.im]
    }

    pub fn from_coords(c: [f64; 4]) -> Self {
        Self::new(Complex64::new(c[0], c[1]), Complex64::new(c[2], c[3]))
    }

    /// Swap coordinates: (z, w) -> (w, z).
    pub fn swapped(&self) -> Self {
        Self::new(self.w, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.z.re.is_finite() && self.z.im.is_finite() && self.w.re.is_finite() && self.w.im.is_finite()
    }

    /// Lexicographic total order on (Re z, Im z, Re w, Im w); used wherever a
    /// deterministic point ordering is needed.
    pub fn lex_cmp(&self, other: &PointC2) -> std::cmp::Ordering {
        let a = self.coords();
        let b = other.coords();
        for i in 0..4 {
            let ord = a[i].total_cmp(&b[i]);
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    }
}

/// 2x2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2C {
    pub m: [[Complex64; 2]; 2],
}

impl Matrix2C {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::new(one, zero, zero, one)
    }

    pub fn mul(&self, rhs: &Matrix2C) -> Matrix2C {
        let a = &self.m;
        let b = &rhs.m;
        Matrix2C::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn apply(&self, v: (Complex64, Complex64)) -> (Complex64, Complex64) {
        (
            self.m[0][0] * v.0 + self.m[0][1] * v.1,
            self.m[1][0] * v.0 + self.m[1][1] * v.1,
        )
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn sub(&self, rhs: &Matrix2C) -> Matrix2C {
        Matrix2C::new(
            self.m[0][0] - rhs.m[0][0],
            self.m[0][1] - rhs.m[0][1],
            self.m[1][0] - rhs.m[1][0],
            self.m[1][1] - rhs.m[1][1],
        )
    }

    pub fn scale(&self, s: f64) -> Matrix2C {
        Matrix2C::new(
            self.m[0][0] * s,
            self.m[0][1] * s,
            self.m[1][0] * s,
            self.m[1][1] * s,
        )
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.m[0][0].norm_sqr()
            + self.m[0][1].norm_sqr()
            + self.m[1][0].norm_sqr()
            + self.m[1][1].norm_sqr())
        .sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.m[0][0]
            .norm()
            .max(self.m[0][1].norm())
            .max(self.m[1][0].norm())
            .max(self.m[1][1].norm())
    }

    /// Largest singular value, from the eigenvalues of A* A.
    pub fn spectral_norm(&self) -> f64 {
        let t = self.m[0][0].norm_sqr()
            + self.m[0][1].norm_sqr()
            + self.m[1][0].norm_sqr()
            + self.m[1][1].norm_sqr();
        let d = self.det().norm_sqr();
        let disc = (t * t - 4.0 * d).max(0.0);
        (0.5 * (t + disc.sqrt())).sqrt()
    }

    /// Eigenvalues ordered by modulus, largest first. The smaller one is
    /// recovered as det / lambda_max, which keeps the product of the pair equal
    /// to the determinant at machine precision.
    pub fn eigenvalues(&self) -> (Complex64, Complex64) {
        let tr = self.trace();
        let det = self.det();
        let disc = (tr * tr - det * 4.0).sqrt();
        let r1 = (tr + disc) * 0.5;
        let r2 = (tr - disc) * 0.5;
        let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
        if big.norm() == 0.0 {
            return (big, big);
        }
        (big, det / big)
    }

    /// Unit eigenvector for the given eigenvalue.
    pub fn eigenvector(&self, lambda: Complex64) -> (Complex64, Complex64) {
        let a = self.m[0][0] - lambda;
        let b = self.m[0][1];
        let c = self.m[1][0];
        let d = self.m[1][1] - lambda;
        // (a b; c d) v = 0: take the cross of the larger row.
        let (v0, v1) = if a.norm() + b.norm() >= c.norm() + d.norm() {
            (b, -a)
        } else {
            (d, -c)
        };
        let n = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        if n == 0.0 {
            // Scalar matrix: any direction is an eigenvector.
            return (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        }
        (v0 / n, v1 / n)
    }

    /// Solve A x = rhs for 2x2 complex A. None if the determinant underflows
    /// relative to the matrix scale.
    pub fn solve(&self, rhs: (Complex64, Complex64)) -> Option<(Complex64, Complex64)> {
        let det = self.det();
        let scale = self.max_abs_entry();
        if det.norm() <= 1e-300 || det.norm() < 1e-14 * scale * scale * f64::EPSILON.sqrt() {
            return None;
        }
        let x = (rhs.0 * self.m[1][1] - rhs.1 * self.m[0][1]) / det;
        let y = (self.m[0][0] * rhs.1 - self.m[1][0] * rhs.0) / det;
        Some((x, y))
    }
}

/// Polynomial with complex coefficients in ascending order; degree >= 2 and a
/// nonzero leading coefficient are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPolynomial {
    coeffs: Vec<Complex64>,
}

impl ComplexPolynomial {
    pub fn new(coeffs: Vec<Complex64>) -> std::result::Result<Self, String> {
        if coeffs.len() < 3 {
            return Err(format!(
                "degree must be at least 2, got {}",
                coeffs.len().saturating_sub(1)
            ));
        }
        if coeffs.last().unwrap().norm() == 0.0 {
            return Err("leading coefficient must be nonzero".to_string());
        }
        Ok(Self { coeffs })
    }

    /// Monic p(w) = w^2 + c, handy for tests and fixtures.
    pub fn quadratic(c: Complex64) -> Self {
        Self {
            coeffs: vec![c, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        acc
    }

    /// Derivative, also by Horner.
    pub fn eval_derivative(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * w + c * (k as f64);
        }
        acc
    }
}

/// One Henon factor g(z, w) = (w, P(w) + a z).
#[derive(Debug, Clone, PartialEq)]
pub struct HenonFactor {
    pub poly: ComplexPolynomial,
    pub twist: Complex64,
}

impl HenonFactor {
    pub fn new(poly: ComplexPolynomial, twist: Complex64) -> std::result::Result<Self, String> {
        if twist.norm() == 0.0 {
            return Err("twist coefficient a must be nonzero".to_string());
        }
        Ok(Self { poly, twist })
    }

    fn eval(&self, p: PointC2) -> PointC2 {
        PointC2::new(p.w, self.poly.eval(p.w) + self.twist * p.z)
    }

    /// Inverse: (z, w) -> ((w - P(z)) / a, z).
    fn eval_inverse(&self, p: PointC2) -> PointC2 {
        PointC2::new((p.w - self.poly.eval(p.z)) / self.twist, p.z)
    }

    /// D g = (0 1; a P'(w)), so det D g = -a.
    fn jacobian(&self, p: PointC2) -> Matrix2C {
        Matrix2C::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            self.twist,
            self.poly.eval_derivative(p.w),
        )
    }

    /// Jacobian of the inverse at p: (-P'(z)/a 1/a; 1 0), det = -1/a.
    fn jacobian_inverse(&self, p: PointC2) -> Matrix2C {
        Matrix2C::new(
            -self.poly.eval_derivative(p.z) / self.twist,
            Complex64::new(1.0, 0.0) / self.twist,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        )
    }

    /// Smallest r >= 1 with |lead| r^d - sum_{k<d} |c_k| r^k - |a| r >= 2 r for
    /// all radii >= r. The left side minus 2r has a single sign change on
    /// (0, inf) (one Descartes sign change), so doubling plus bisection finds it.
    fn escape_radius(&self) -> f64 {
        let d = self.poly.degree();
        let lead = self.poly.coeffs()[d].norm();
        let lows: Vec<f64> = self.poly.coeffs()[..d].iter().map(|c| c.norm()).collect();
        let extra = self.twist.norm() + 2.0;
        let h = |r: f64| -> f64 {
            let mut s = lead * r.powi(d as i32);
            for (k, &c) in lows.iter().enumerate() {
                s -= c * r.powi(k as i32);
            }
            s - extra * r
        };
        if h(1.0) >= 0.0 {
            return 1.0;
        }
        let mut hi = 1.0_f64;
        for _ in 0..2000 {
            hi *= 2.0;
            if h(hi) >= 0.0 {
                break;
            }
        }
        let mut lo = hi / 2.0;
        while hi - lo > 1e-6 * hi {
            let mid = 0.5 * (lo + hi);
            if h(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Composition of Henon factors, applied right to left: factors[0] acts last.
#[derive(Debug, Clone, PartialEq)]
pub struct HenonMap {
    factors: Vec<HenonFactor>,
    degree: u64,
    twist_product: Complex64,
    jacobian_det: Complex64,
    escape_radius: f64,
}

impl HenonMap {
    pub fn new(factors: Vec<HenonFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptyFactorList);
        }
        let degree = factors.iter().map(|f| f.poly.degree() as u64).product();
        let twist_product = factors
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, f| acc * f.twist);
        let sign = if factors.len().is_multiple_of(2) { 1.0 } else { -1.0 };
        let jacobian_det = twist_product * sign;
        let escape_radius = factors
            .iter()
            .map(|f| f.escape_radius())
            .fold(1.0_f64, f64::max);
        Ok(Self {
            factors,
            degree,
            twist_product,
            jacobian_det,
            escape_radius,
        })
    }

    /// Build from (coefficients, twist) pairs, validating each factor. Errors
    /// carry the factor index.
    pub fn from_parts(parts: Vec<(Vec<Complex64>, Complex64)>) -> Result<Self> {
        let mut factors = Vec::with_capacity(parts.len());
        for (index, (coeffs, twist)) in parts.into_iter().enumerate() {
            let n = coeffs.len();
            let poly = ComplexPolynomial::new(coeffs).map_err(|msg| {
                if msg.contains("degree") {
                    Error::DegreeTooLow {
                        index,
                        degree: n.saturating_sub(1),
                    }
                } else {
                    Error::ZeroLeadingCoefficient { index }
                }
            })?;
            let factor =
                HenonFactor::new(poly, twist).map_err(|_| Error::ZeroTwist { index })?;
            factors.push(factor);
        }
        Self::new(factors)
    }

    pub fn factors(&self) -> &[HenonFactor] {
        &self.factors
    }

    /// Dynamical degree d = product of the factor degrees.
    pub fn degree(&self) -> u64 {
        self.degree
    }

    /// Product of the twist coefficients a_1 ... a_m. Its modulus |a| drives
    /// every volume and dimension bound below.
    pub fn twist_product(&self) -> Complex64 {
        self.twist_product
    }

    /// det Dg = (-1)^m a_1 ... a_m, constant over C^2.
    pub fn jacobian_det(&self) -> Complex64 {
        self.jacobian_det
    }

    /// |a| = |det Dg|.
    pub fn twist_modulus(&self) -> f64 {
        self.twist_product.norm()
    }

    /// Radius R of the filtration bidisk; see `HenonFactor::escape_radius`.
    pub fn escape_radius(&self) -> f64 {
        self.escape_radius
    }

    fn check(p: PointC2, factor: usize, step: usize) -> Result<PointC2> {
        if !p.is_finite() || p.sup_norm() > MAGNITUDE_CAP {
            return Err(Error::RangeExceeded {
                factor,
                step,
                cap: MAGNITUDE_CAP,
            });
        }
        Ok(p)
    }

    /// One application of the composition. `step` only labels range errors.
    fn eval_step(&self, p: PointC2, step: usize) -> Result<PointC2> {
        let mut q = p;
        for i in (0..self.factors.len()).rev() {
            q = Self::check(self.factors[i].eval(q), i, step)?;
        }
        Ok(q)
    }

    fn eval_inverse_step(&self, p: PointC2, step: usize) -> Result<PointC2> {
        let mut q = p;
        for (i, f) in self.factors.iter().enumerate() {
            q = Self::check(f.eval_inverse(q), i, step)?;
        }
        Ok(q)
    }

    pub fn eval(&self, p: PointC2) -> Result<PointC2> {
        self.eval_step(p, 0)
    }

    pub fn eval_inverse(&self, p: PointC2) -> Result<PointC2> {
        self.eval_inverse_step(p, 0)
    }

    /// Jacobian of the composition at p (chain rule across factors).
    pub fn jacobian(&self, p: PointC2) -> Matrix2C {
        let mut q = p;
        let mut jac = Matrix2C::identity();
        for i in (0..self.factors.len()).rev() {
            jac = self.factors[i].jacobian(q).mul(&jac);
            q = self.factors[i].eval(q);
        }
        jac
    }

    /// Jacobian of the inverse map at p.
    pub fn jacobian_inverse(&self, p: PointC2) -> Matrix2C {
        let mut q = p;
        let mut jac = Matrix2C::identity();
        for f in self.factors.iter() {
            jac = f.jacobian_inverse(q).mul(&jac);
            q = f.eval_inverse(q);
        }
        jac
    }

    /// n-fold iterate; n < 0 iterates the inverse.
    pub fn iterate(&self, p: PointC2, n: i64) -> Result<PointC2> {
        let mut q = p;
        if n >= 0 {
            for step in 0..n as usize {
                q = self.eval_step(q, step)?;
            }
        } else {
            for step in 0..(-n) as usize {
                q = self.eval_inverse_step(q, step)?;
            }
        }
        Ok(q)
    }

    /// Iterate and accumulate the derivative cocycle: returns g^n(p) and
    /// D(g^n)(p) (or the inverse versions for n < 0).
    pub fn iterate_with_jacobian(&self, p: PointC2, n: i64) -> Result<(PointC2, Matrix2C)> {
        let mut q = p;
        let mut jac = Matrix2C::identity();
        if n >= 0 {
            for step in 0..n as usize {
                jac = self.jacobian(q).mul(&jac);
                q = self.eval_step(q, step)?;
            }
        } else {
            for step in 0..(-n) as usize {
                jac = self.jacobian_inverse(q).mul(&jac);
                q = self.eval_inverse_step(q, step)?;
            }
        }
        Ok((q, jac))
    }

    /// The inverse composition brought back to Henon normal form. The inverse
    /// of g is conjugate, by the coordinate swap (z, w) -> (w, z), to the
    /// composition of factors (w, -P_i(w)/a_i + z/a_i) taken in reversed
    /// order. Orbits correspond via the swap: swap ∘ g^{-1} = inv ∘ swap.
    pub fn inverse_normal_form(&self) -> Result<HenonMap> {
        let mut parts = Vec::with_capacity(self.factors.len());
        for f in self.factors.iter().rev() {
            let coeffs = f
                .poly
                .coeffs()
                .iter()
                .map(|&c| -c / f.twist)
                .collect::<Vec<_>>();
            let twist = Complex64::new(1.0, 0.0) / f.twist;
            parts.push((coeffs, twist));
        }
        HenonMap::from_parts(parts)
    }
}

// --- map files -------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FactorFile {
    /// Ascending coefficients of P, each as [re, im].
    coeffs: Vec<[f64; 2]>,
    /// Twist coefficient a as [re, im].
    a: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    factors: Vec<FactorFile>,
}

/// Parse a map from its JSON description:
/// `{"factors": [{"coeffs": [[re,im],...], "a": [re,im]}]}`.
pub fn map_from_json(text: &str) -> Result<HenonMap> {
    let file: MapFile = serde_json::from_str(text).map_err(|source| Error::Json {
        context: "map file".to_string(),
        source,
    })?;
    let parts = file
        .factors
        .into_iter()
        .map(|f| {
            (
                f.coeffs
                    .iter()
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect::<Vec<_>>(),
                Complex64::new(f.a[0], f.a[1]),
            )
        })
        .collect();
    HenonMap::from_parts(parts)
}

/// Canonical JSON form of a map; also the hashing input for report headers.
pub fn map_to_json(map: &HenonMap) -> String {
    let file = MapFile {
        factors: map
            .factors()
            .iter()
            .map(|f| FactorFile {
                coeffs: f.poly.coeffs().iter().map(|c| [c.re, c.im]).collect(),
                a: [f.twist.re, f.twist.im],
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("map serialization cannot fail")
}
