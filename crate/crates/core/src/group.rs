//! Arithmetic of the Heisenberg group `H^n = C^n x R`.
//!
//! Points are stored in the exponential coordinates of the second kind with
//! the product
//!
//! ```text
//! (z, t) (z', t') = (z + z', t + t' + 2 Im sum_j z_j conj(z'_j))
//! ```
//!
//! Dilations act by `delta (z, t) = (delta z, delta^2 t)` and homogeneous
//! homomorphisms by `(z, t) -> (A z, mu t)` with `A` a real `2n x 2n` matrix on
//! `(Re z, Im z)`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HqcError, Result};
use crate::rng::stream_rng;

/// A point `(z, t)` of `H^n`.
///
/// Serialized as the flat coordinate list `[x_1..x_n, y_1..y_n, t]`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HPoint {
    z: Vec<Complex64>,
    t: f64,
}

impl HPoint {
    pub fn new(z: Vec<Complex64>, t: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(HqcError::ZeroDimension);
        }
        if !t.is_finite() || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(HqcError::NonFinite {
                context: "HPoint::new".into(),
            });
        }
        Ok(Self { z, t })
    }

    /// Builds a point from `[x_1..x_n, y_1..y_n, t]`.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        if coords.len() < 3 || coords.len() % 2 == 0 {
            return Err(invalid(
                "coords",
                format!("expected 2n+1 coordinates, got {}", coords.len()),
            ));
        }
        let n = (coords.len() - 1) / 2;
        let z = (0..n)
            .map(|j| Complex64::new(coords[j], coords[n + j]))
            .collect();
        Self::new(z, coords[2 * n])
    }

    pub fn identity(n: usize) -> Self {
        Self {
            z: vec![Complex64::new(0.0, 0.0); n.max(1)],
            t: 0.0,
        }
    }

    /// Point of `H^1` from real coordinates.
    pub fn h1(x: f64, y: f64, t: f64) -> Self {
        Self {
            z: vec![Complex64::new(x, y)],
            t,
        }
    }

    pub(crate) fn from_parts_unchecked(z: Vec<Complex64>, t: f64) -> Self {
        Self { z, t }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.z.iter().map(|c| c.re).collect();
        out.extend(self.z.iter().map(|c| c.im));
        out.push(self.t);
        out
    }

    /// Horizontal part as the real vector `(Re z, Im z)`.
    pub fn horizontal(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.z[i].re
            } else {
                self.z[i - n].im
            }
        })
    }

    pub fn z_norm(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_identity(&self) -> bool {
        self.t == 0.0 && self.z.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.z.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Standard Gaussian in all `2n+1` coordinates, scaled by `scale`.
    pub fn random_gaussian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Self {
        let z = (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(scale * re, scale * im)
            })
            .collect();
        let t: f64 = rng.sample(StandardNormal);
        Self { z, t: scale * t }
    }
}

impl fmt::Debug for HPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HPoint(")?;
        for (j, c) in self.z.iter().enumerate() {
            if j > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, "; t={})", self.t)
    }
}

impl fmt::Display for HPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl TryFrom<Vec<f64>> for HPoint {
    type Error = HqcError;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::from_coords(&value)
    }
}

impl From<HPoint> for Vec<f64> {
    fn from(p: HPoint) -> Self {
        p.coords()
    }
}

/// `Im sum_j a_j conj(b_j)`, the symplectic pairing behind the group law.
pub fn symplectic(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.im * y.re - x.re * y.im).sum()
}

fn check_dims(p: &HPoint, q: &HPoint) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(HqcError::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

/// The group product `p q`.
pub fn multiply(p: &HPoint, q: &HPoint) -> Result<HPoint> {
    check_dims(p, q)?;
    Ok(mul_unchecked(p, q))
}

fn mul_unchecked(p: &HPoint, q: &HPoint) -> HPoint {
    let z = p.z.iter().zip(&q.z).map(|(a, b)| a + b).collect();
    HPoint {
        z,
        t: p.t + q.t + 2.0 * symplectic(&p.z, &q.z),
    }
}

/// `(z, t)^{-1} = (-z, -t)`.
pub fn inverse(p: &HPoint) -> HPoint {
    HPoint {
        z: p.z.iter().map(|c| -c).collect(),
        t: -p.t,
    }
}

/// `delta (z, t) = (delta z, delta^2 t)`.
pub fn dilate(delta: f64, p: &HPoint) -> Result<HPoint> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("dilation factor must be positive, got {delta}")));
    }
    Ok(dilate_unchecked(delta, p))
}

pub(crate) fn dilate_unchecked(delta: f64, p: &HPoint) -> HPoint {
    HPoint {
        z: p.z.iter().map(|c| c * delta).collect(),
        t: delta * delta * p.t,
    }
}

/// Left translation `p -> l p`.
pub fn left_translate(l: &HPoint, p: &HPoint) -> Result<HPoint> {
    multiply(l, p)
}

impl Mul for &HPoint {
    type Output = HPoint;

    /// Group product. Panics on a dimension mismatch; use [`multiply`] for a
    /// checked version.
    fn mul(self, rhs: &HPoint) -> HPoint {
        assert_eq!(self.dim(), rhs.dim(), "HPoint product across dimensions");
        mul_unchecked(self, rhs)
    }
}

/// `q^{-1} p`, the increment used by every left-invariant distance.
pub fn increment(p: &HPoint, q: &HPoint) -> Result<HPoint> {
    multiply(&inverse(q), p)
}

/// Dimension data for `H^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    n: usize,
}

impl GroupParams {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(HqcError::ZeroDimension);
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Homogeneous dimension `Q = 2n + 2`.
    pub fn homogeneous_dim(&self) -> usize {
        2 * self.n + 2
    }

    pub fn q(&self) -> f64 {
        self.homogeneous_dim() as f64
    }
}

/// Dilation-commuting map `(z, t) -> (A z, mu t)`.
///
/// Any `(A, mu)` can be constructed; whether it is a group homomorphism is a
/// runtime question answered by [`validate_homomorphism`]. Only a
/// [`ValidatedHom`] is accepted by [`hom_apply`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousHom {
    a: DMatrix<f64>,
    mu: f64,
}

impl HomogeneousHom {
    pub fn new(a: DMatrix<f64>, mu: f64) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() || a.nrows() % 2 != 0 {
            return Err(invalid(
                "A",
                format!("expected a 2n x 2n matrix, got {}x{}", a.nrows(), a.ncols()),
            ));
        }
        if !mu.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(HqcError::NonFinite {
                context: "HomogeneousHom".into(),
            });
        }
        Ok(Self { a, mu })
    }

    /// From row-major rows of `A`.
    pub fn from_rows(rows: &[Vec<f64>], mu: f64) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(invalid("matrix", "rows must form a square matrix"));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]), mu)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(2 * n, 2 * n),
            mu: 1.0,
        }
    }

    /// The dilation `delta_lambda` as a homomorphism.
    pub fn dilation(n: usize, lambda: f64) -> Self {
        Self {
            a: DMatrix::identity(2 * n, 2 * n) * lambda,
            mu: lambda * lambda,
        }
    }

    /// `x_1 -> a x_1`, `y_1 -> y_1 / a`, everything else fixed.
    pub fn anisotropic(n: usize, a: f64) -> Self {
        let mut m = DMatrix::identity(2 * n, 2 * n);
        m[(0, 0)] = a;
        m[(n, n)] = 1.0 / a;
        Self { a: m, mu: 1.0 }
    }

    /// `z -> e^{i theta} z` in every coordinate.
    pub fn rotation(n: usize, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            m[(j, j)] = c;
            m[(j, n + j)] = -s;
            m[(n + j, j)] = s;
            m[(n + j, n + j)] = c;
        }
        Self { a: m, mu: 1.0 }
    }

    /// `(z, t) -> (conj z, -t)`.
    pub fn conjugation(n: usize) -> Self {
        let mut m = DMatrix::identity(2 * n, 2 * n);
        for j in n..2 * n {
            m[(j, j)] = -1.0;
        }
        Self { a: m, mu: -1.0 }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Evaluates `(A z, mu t)` without any homomorphism check.
    pub fn apply(&self, p: &HPoint) -> Result<HPoint> {
        if p.dim() != self.dim() {
            return Err(HqcError::DimensionMismatch {
                expected: self.dim(),
                found: p.dim(),
            });
        }
        Ok(self.apply_unchecked(p))
    }

    pub(crate) fn apply_unchecked(&self, p: &HPoint) -> HPoint {
        let n = self.dim();
        let z = (0..n)
            .map(|i| {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..n {
                    re += self.a[(i, j)] * p.z[j].re + self.a[(i, n + j)] * p.z[j].im;
                    im += self.a[(n + i, j)] * p.z[j].re + self.a[(n + i, n + j)] * p.z[j].im;
                }
                Complex64::new(re, im)
            })
            .collect();
        HPoint {
            z,
            t: self.mu * p.t,
        }
    }

    /// Max-entry residual of `A^T J A - mu J`, the exact compatibility test.
    pub fn symplectic_residual(&self) -> f64 {
        let n = self.dim();
        let j = symplectic_form(n);
        let lhs = self.a.transpose() * &j * &self.a;
        (lhs - j * self.mu).amax()
    }

    pub fn compose(&self, other: &HomogeneousHom) -> Result<HomogeneousHom> {
        if self.dim() != other.dim() {
            return Err(HqcError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            a: &self.a * &other.a,
            mu: self.mu * other.mu,
        })
    }

    pub fn inverse(&self) -> Result<HomogeneousHom> {
        let a = self
            .a
            .clone()
            .try_inverse()
            .ok_or_else(|| invalid("A", "matrix is singular"))?;
        if self.mu == 0.0 {
            return Err(invalid("mu", "vertical multiplier is zero"));
        }
        Ok(Self { a, mu: 1.0 / self.mu })
    }

    /// Upper bound on `|L v|_K` over the Koranyi unit sphere:
    /// `max(||A||_2, sqrt|mu|)`.
    pub fn stretch_bound(&self) -> f64 {
        let op = self.a.clone().svd(false, false).singular_values.max();
        op.max(self.mu.abs().sqrt())
    }

    /// Spectral condition number of `A`.
    pub fn condition_number(&self) -> f64 {
        let sv = self.a.clone().svd(false, false).singular_values;
        sv.max() / sv.min()
    }
}

/// `J` with `v^T J w = sum_j (y_j x'_j - x_j y'_j)` for `v = (x, y)`.
fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = -1.0;
        j[(n + k, k)] = 1.0;
    }
    j
}

/// Outcome of a sampled homomorphism check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomValidation {
    pub valid: bool,
    pub worst_residual: f64,
    pub samples: usize,
}

/// Samples random pairs `(p, q)` and measures how far `L(pq)` is from
/// `L(p) L(q)`. Horizontal residuals are scaled by `1 + |L p| + |L q|` and the
/// vertical one by its square, so the check is scale-free.
pub fn validate_homomorphism(
    hom: &HomogeneousHom,
    samples: usize,
    tol: f64,
    seed: u64,
) -> HomValidation {
    let n = hom.dim();
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let p = HPoint::random_gaussian(n, 1.0, &mut rng);
        let q = HPoint::random_gaussian(n, 1.0, &mut rng);
        let lhs = hom.apply_unchecked(&(&p * &q));
        let lp = hom.apply_unchecked(&p);
        let lq = hom.apply_unchecked(&q);
        let rhs = &lp * &lq;
        let scale = 1.0 + crate::metrics::koranyi_norm(&lp) + crate::metrics::koranyi_norm(&lq);
        let dz = lhs
            .z
            .iter()
            .zip(&rhs.z)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let dt = (lhs.t - rhs.t).abs();
        worst = worst.max(dz / scale).max(dt / (scale * scale));
    }
    HomValidation {
        valid: worst <= tol,
        worst_residual: worst,
        samples: samples.max(1),
    }
}

/// A homogeneous homomorphism that passed [`validate_homomorphism`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidatedHom {
    hom: HomogeneousHom,
    validation: HomValidation,
}

impl ValidatedHom {
    pub const DEFAULT_TOL: f64 = 1e-9;
    pub const DEFAULT_SAMPLES: usize = 256;

    pub fn new(hom: HomogeneousHom) -> Result<Self> {
        Self::with_check(hom, Self::DEFAULT_SAMPLES, Self::DEFAULT_TOL, 0)
    }

    pub fn with_check(hom: HomogeneousHom, samples: usize, tol: f64, seed: u64) -> Result<Self> {
        let validation = validate_homomorphism(&hom, samples, tol, seed);
        if !validation.valid {
            return Err(HqcError::InvalidHomomorphism {
                residual: validation.worst_residual,
                tol,
            });
        }
        if hom.mu == 0.0 {
            return Err(invalid("mu", "vertical multiplier is zero"));
        }
        Ok(Self { hom, validation })
    }

    pub fn hom(&self) -> &HomogeneousHom {
        &self.hom
    }

    pub fn validation(&self) -> HomValidation {
        self.validation
    }

    pub fn dim(&self) -> usize {
        self.hom.dim()
    }
}

/// Applies a validated homomorphism.
pub fn hom_apply(hom: &ValidatedHom, p: &HPoint) -> Result<HPoint> {
    hom.hom.apply(p)
}
