//! Carnot-Caratheodory distance by polygonal horizontal paths.
//!
//! The target `q' = p^{-1} q` is rescaled to unit Koranyi norm. A path is a
//! polygon `w_0 = 0, w_1, .., w_N = Z` in `C^n`; along a straight segment the
//! horizontality constraint integrates to `2 (y_k x_{k+1} - x_k y_{k+1})` per
//! coordinate pair, so the endpoint height is a quadratic form in the
//! waypoints. We minimize the energy `N sum |w_{k+1} - w_k|^2` (an upper bound
//! for the squared length) subject to that quadratic equality.
//!
//! A quadratic objective with one quadratic equality has no duality gap, so the
//! discrete problem is solved globally: whiten by the Cholesky factor of the
//! energy, diagonalize the constraint, and bisect on the multiplier. Restarts
//! run an independent projected descent from random loops and can only confirm
//! (or, on numerical trouble, replace) that answer.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::koranyi_norm;
use crate::error::{invalid, Result};
use crate::group::{dilate_unchecked, increment, HPoint};
use crate::rng::stream_rng;

/// Optimizer budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcOptions {
    pub segments: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Keep the optimal path in the estimate.
    pub keep_path: bool,
}

impl Default for CcOptions {
    fn default() -> Self {
        Self {
            segments: 32,
            restarts: 8,
            seed: 0,
            max_iters: 200,
            keep_path: false,
        }
    }
}

/// A polygonal horizontal path; heights follow from the waypoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalPath {
    pub waypoints: Vec<HPoint>,
}

impl HorizontalPath {
    /// Sum of Euclidean segment lengths in `z`.
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| {
                w[0].z()
                    .iter()
                    .zip(w[1].z())
                    .map(|(a, b)| (b - a).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Largest mismatch between consecutive waypoints and the height a
    /// horizontal straight segment would produce.
    pub fn horizontality_residual(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| {
                let lift: f64 = w[0]
                    .z()
                    .iter()
                    .zip(w[1].z())
                    .map(|(a, b)| 2.0 * (a.im * b.re - a.re * b.im))
                    .sum();
                (w[1].t() - w[0].t() - lift).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Result of one CC distance computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcEstimate {
    /// Length of the best horizontal path found; an upper bound for the
    /// continuum distance, exact for the discretization.
    pub distance: f64,
    /// `|z_q - z_p|`.
    pub horizontal_bound: f64,
    pub segments: usize,
    pub restarts: usize,
    /// 0 for the dual solve, `r >= 1` for a descent restart.
    pub best_start: usize,
    /// Relative endpoint-height mismatch of the best path.
    pub constraint_residual: f64,
    pub converged: bool,
    pub multiplier: f64,
    /// The constraint was met on the boundary of the dual interval.
    pub hard_case: bool,
    pub path: Option<HorizontalPath>,
}

/// Precomputed matrices for `(n, N)`.
struct Solver {
    n: usize,
    segments: usize,
    l: DMatrix<f64>,
    v: DMatrix<f64>,
    theta: DVector<f64>,
}

impl Solver {
    fn new(n: usize, segments: usize) -> Self {
        let d = 2 * n;
        let m = d * (segments - 1);
        let nf = segments as f64;
        let mut p = DMatrix::zeros(m, m);
        let mut c = DMatrix::zeros(m, m);
        for k in 0..segments - 1 {
            for i in 0..d {
                p[(k * d + i, k * d + i)] = 2.0 * nf;
            }
            if k + 1 < segments - 1 {
                let (a, b) = (k * d, (k + 1) * d);
                for i in 0..d {
                    p[(a + i, b + i)] = -nf;
                    p[(b + i, a + i)] = -nf;
                }
                for j in 0..n {
                    // 2 (y_k x_{k+1} - x_k y_{k+1}) split symmetrically.
                    let (xk, yk, xk1, yk1) = (a + j, a + n + j, b + j, b + n + j);
                    c[(yk, xk1)] += 1.0;
                    c[(xk1, yk)] += 1.0;
                    c[(xk, yk1)] -= 1.0;
                    c[(yk1, xk)] -= 1.0;
                }
            }
        }
        let l = p.cholesky().expect("discrete Laplacian is positive definite").l();
        let linv = l.clone().try_inverse().expect("triangular factor is invertible");
        let s = &linv * &c * linv.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let eig = s.symmetric_eigen();
        Self {
            n,
            segments,
            l,
            v: eig.eigenvectors,
            theta: eig.eigenvalues,
        }
    }

    fn m(&self) -> usize {
        2 * self.n * (self.segments - 1)
    }

    /// Right-hand sides for the endpoint `Z`: `e` is the energy coupling to the
    /// fixed end, `g` the constraint coupling.
    fn couplings(&self, zx: &[f64], zy: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let m = self.m();
        let n = self.n;
        let nf = self.segments as f64;
        let last = (self.segments - 2) * 2 * n;
        let mut r0 = DVector::zeros(m);
        let mut g = DVector::zeros(m);
        for j in 0..n {
            r0[last + j] = nf * zx[j];
            r0[last + n + j] = nf * zy[j];
            g[last + j] = -zy[j];
            g[last + n + j] = zx[j];
        }
        (r0, g)
    }

    /// Global minimizer of the energy with endpoint `(Z, T)`. Returns interior
    /// waypoints, the multiplier and whether the hard case was hit.
    fn solve(&self, zx: &[f64], zy: &[f64], target: f64) -> (DVector<f64>, f64, bool) {
        let (r0, g) = self.couplings(zx, zy);
        let solve_l = |b: &DVector<f64>| {
            self.l
                .solve_lower_triangular(b)
                .expect("triangular factor is invertible")
        };
        let beta0 = self.v.transpose() * solve_l(&r0);
        let beta1 = self.v.transpose() * solve_l(&g);
        let theta = &self.theta;
        let m = theta.len();
        let eta_at = |nu: f64, skip: &dyn Fn(usize) -> bool| -> DVector<f64> {
            DVector::from_fn(m, |i, _| {
                if skip(i) {
                    0.0
                } else {
                    (beta0[i] + nu * beta1[i]) / (1.0 - nu * theta[i])
                }
            })
        };
        let lift = |eta: &DVector<f64>| -> f64 {
            (0..m)
                .map(|i| theta[i] * eta[i] * eta[i] + 2.0 * beta1[i] * eta[i])
                .sum()
        };
        let tmax = theta.max();
        let tmin = theta.min();
        let nu_hi = 1.0 / tmax;
        let nu_lo = 1.0 / tmin;
        let near = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
        let none = |_: usize| false;

        let shrink = 1.0 - 1e-13;
        let c_hi = lift(&eta_at(nu_hi * shrink, &none));
        let c_lo = lift(&eta_at(nu_lo * shrink, &none));

        let (eta, nu, hard) = if target > c_hi || target < c_lo {
            // Boundary solution: drop the singular eigen-directions, then add
            // the amount of one of them that meets the constraint.
            let (nu, edge) = if target > c_hi { (nu_hi, tmax) } else { (nu_lo, tmin) };
            let is_edge = |i: usize| near(theta[i], edge);
            let mut eta = eta_at(nu, &is_edge);
            let base = lift(&eta);
            let star = (0..m).find(|&i| is_edge(i)).expect("edge eigenvalue exists");
            // edge * tau^2 + 2 beta1 tau + (base - target) = 0
            let (a, b, c0) = (edge, 2.0 * beta1[star], base - target);
            let disc = (b * b - 4.0 * a * c0).max(0.0);
            let tau = (-b + disc.sqrt()) / (2.0 * a);
            eta[star] = tau;
            (eta, nu, true)
        } else {
            let (mut lo, mut hi) = (nu_lo * shrink, nu_hi * shrink);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if lift(&eta_at(mid, &none)) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let nu = 0.5 * (lo + hi);
            (eta_at(nu, &none), nu, false)
        };
        let u = self
            .l
            .transpose()
            .solve_upper_triangular(&(&self.v * eta))
            .expect("triangular factor is invertible");
        (u, nu, hard)
    }
}

thread_local! {
    static SOLVERS: RefCell<HashMap<(usize, usize), Arc<Solver>>> = RefCell::new(HashMap::new());
}

fn solver(n: usize, segments: usize) -> Arc<Solver> {
    SOLVERS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, segments))
            .or_insert_with(|| Arc::new(Solver::new(n, segments)))
            .clone()
    })
}

/// Flat waypoint array `w_0 .. w_N`, each `[x_1..x_n, y_1..y_n]`.
struct Polygon<'a> {
    n: usize,
    w: &'a [f64],
}

impl Polygon<'_> {
    fn count(&self) -> usize {
        self.w.len() / (2 * self.n)
    }

    fn x(&self, k: usize, j: usize) -> f64 {
        self.w[k * 2 * self.n + j]
    }

    fn y(&self, k: usize, j: usize) -> f64 {
        self.w[k * 2 * self.n + self.n + j]
    }

    fn lift(&self) -> f64 {
        (0..self.count() - 1)
            .map(|k| {
                (0..self.n)
                    .map(|j| 2.0 * (self.y(k, j) * self.x(k + 1, j) - self.x(k, j) * self.y(k + 1, j)))
                    .sum::<f64>()
            })
            .sum()
    }

    fn segment(&self, k: usize) -> f64 {
        let d = 2 * self.n;
        (0..d)
            .map(|i| (self.w[(k + 1) * d + i] - self.w[k * d + i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn length(&self) -> f64 {
        (0..self.count() - 1).map(|k| self.segment(k)).sum()
    }

    fn energy(&self) -> f64 {
        let segs = (self.count() - 1) as f64;
        segs * (0..self.count() - 1).map(|k| self.segment(k).powi(2)).sum::<f64>()
    }

    /// Gradients of energy and lift with respect to the interior waypoints.
    fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let d = 2 * n;
        let count = self.count();
        let segs = (count - 1) as f64;
        let mut ge = vec![0.0; d * (count - 2)];
        let mut gc = vec![0.0; d * (count - 2)];
        for k in 1..count - 1 {
            let o = (k - 1) * d;
            for i in 0..d {
                ge[o + i] = 2.0
                    * segs
                    * (2.0 * self.w[k * d + i] - self.w[(k - 1) * d + i] - self.w[(k + 1) * d + i]);
            }
            for j in 0..n {
                gc[o + j] = 2.0 * (self.y(k - 1, j) - self.y(k + 1, j));
                gc[o + n + j] = 2.0 * (self.x(k + 1, j) - self.x(k - 1, j));
            }
        }
        (ge, gc)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Moves the interior of `w` along the lift gradient until the lift equals
/// `target`. The lift is quadratic along that line, so one root solve is exact
/// up to round-off; a couple of passes clean up what remains.
fn project(n: usize, w: &mut [f64], target: f64) -> bool {
    let d = 2 * n;
    for _ in 0..8 {
        let poly = Polygon { n, w };
        let c0 = poly.lift() - target;
        if c0.abs() <= 1e-14 * (1.0 + target.abs()) {
            return true;
        }
        let (_, g) = poly.gradients();
        let gg = dot(&g, &g);
        if gg < 1e-300 {
            return false;
        }
        // lift(w + a g) = lift(w) + a gg + a^2 q
        let mut shifted = w.to_vec();
        for (i, gi) in g.iter().enumerate() {
            shifted[d + i] += gi;
        }
        let q = Polygon { n, w: &shifted }.lift() - c0 - target - gg;
        let disc = gg * gg - 4.0 * q * c0;
        let alpha = if disc >= 0.0 {
            -2.0 * c0 / (gg + disc.sqrt())
        } else {
            -c0 / gg
        };
        for (i, gi) in g.iter().enumerate() {
            w[d + i] += alpha * gi;
        }
    }
    let poly = Polygon { n, w };
    (poly.lift() - target).abs() <= 1e-10 * (1.0 + target.abs())
}

/// Projected gradient descent on the constraint surface from a random loop.
fn descent<R: Rng + ?Sized>(
    n: usize,
    segments: usize,
    z: &[f64],
    target: f64,
    max_iters: usize,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let d = 2 * n;
    let mut w = vec![0.0; d * (segments + 1)];
    let amp = target.abs().sqrt() * rng.random_range(0.2..1.0);
    let sign = if target >= 0.0 { 1.0 } else { -1.0 };
    let pair = rng.random_range(0..n);
    for k in 0..=segments {
        let s = k as f64 / segments as f64;
        let phase = sign * 2.0 * std::f64::consts::PI * s;
        for i in 0..d {
            w[k * d + i] = s * z[i];
        }
        if k > 0 && k < segments {
            // A closed loop around the origin of plane `pair`, plus noise.
            w[k * d + pair] += amp * (phase.cos() - 1.0);
            w[k * d + n + pair] -= amp * phase.sin();
            for i in 0..d {
                w[k * d + i] += 0.05 * amp * (rng.random::<f64>() - 0.5);
            }
        }
    }
    if !project(n, &mut w, target) {
        return None;
    }
    let mut eta = 1.0 / (8.0 * segments as f64);
    let mut energy = Polygon { n, w: &w }.energy();
    for _ in 0..max_iters {
        let (ge, gc) = Polygon { n, w: &w }.gradients();
        let gg = dot(&gc, &gc);
        let nu = if gg > 0.0 { dot(&ge, &gc) / gg } else { 0.0 };
        let step: Vec<f64> = ge.iter().zip(&gc).map(|(a, b)| a - nu * b).collect();
        if dot(&step, &step).sqrt() <= 1e-12 * (1.0 + energy) {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = w.clone();
            for (i, s) in step.iter().enumerate() {
                trial[d + i] -= eta * s;
            }
            if project(n, &mut trial, target) {
                let e = Polygon { n, w: &trial }.energy();
                if e < energy {
                    w = trial;
                    energy = e;
                    eta *= 1.5;
                    accepted = true;
                    break;
                }
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(w)
}

/// Estimates `d_cc(p, q)` with a single polygon resolution.
pub fn cc_distance_estimate(p: &HPoint, q: &HPoint, opts: &CcOptions) -> Result<CcEstimate> {
    if opts.segments < 2 {
        return Err(invalid("segments", "need at least 2 segments"));
    }
    let rel = increment(q, p)?;
    let n = rel.dim();
    let horizontal_bound = rel.z_norm();
    let scale = koranyi_norm(&rel);
    if scale == 0.0 {
        return Ok(CcEstimate {
            distance: 0.0,
            horizontal_bound: 0.0,
            segments: opts.segments,
            restarts: opts.restarts,
            best_start: 0,
            constraint_residual: 0.0,
            converged: true,
            multiplier: 0.0,
            hard_case: false,
            path: opts.keep_path.then(|| HorizontalPath {
                waypoints: vec![p.clone(), q.clone()],
            }),
        });
    }
    let unit = dilate_unchecked(1.0 / scale, &rel);
    let z: Vec<f64> = unit.coords()[..2 * n].to_vec();
    let (zx, zy) = z.split_at(n);
    let target = unit.t();
    let segments = opts.segments;
    let d = 2 * n;

    let sol = solver(n, segments);
    let (u, multiplier, hard_case) = sol.solve(zx, zy, target);
    let mut dual = vec![0.0; d * (segments + 1)];
    dual[d..d * segments].copy_from_slice(u.as_slice());
    dual[d * segments..].copy_from_slice(&z);
    project(n, &mut dual, target);

    let restarts: Vec<Option<Vec<f64>>> = (1..=opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(opts.seed, r as u64);
            descent(n, segments, &z, target, opts.max_iters, &mut rng)
        })
        .collect();

    let residual = |w: &[f64]| (Polygon { n, w }.lift() - target).abs() / (1.0 + target.abs());
    let mut best = (0usize, dual);
    let mut best_len = if residual(&best.1) <= 1e-9 {
        Polygon { n, w: &best.1 }.length()
    } else {
        f64::INFINITY
    };
    for (i, w) in restarts.into_iter().enumerate() {
        if let Some(w) = w {
            let len = Polygon { n, w: &w }.length();
            if residual(&w) <= 1e-9 && len < best_len * (1.0 - 1e-12) {
                best_len = len;
                best = (i + 1, w);
            }
        }
    }
    let constraint_residual = residual(&best.1);
    let converged = constraint_residual <= 1e-9;
    if !converged {
        best_len = Polygon { n, w: &best.1 }.length();
    }
    let path = opts.keep_path.then(|| HorizontalPath::from(build_path(p, n, scale, &best.1)));
    Ok(CcEstimate {
        distance: scale * best_len,
        horizontal_bound,
        segments,
        restarts: opts.restarts,
        best_start: best.0,
        constraint_residual,
        converged,
        multiplier,
        hard_case,
        path,
    })
}

fn build_path(p: &HPoint, n: usize, scale: f64, w: &[f64]) -> Vec<HPoint> {
    let d = 2 * n;
    let count = w.len() / d;
    let mut out = Vec::with_capacity(count);
    let mut t = 0.0;
    for k in 0..count {
        let zk: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new(w[k * d + j], w[k * d + n + j]))
            .collect();
        if k > 0 {
            t += (0..n)
                .map(|j| 2.0 * (w[(k - 1) * d + n + j] * w[k * d + j] - w[(k - 1) * d + j] * w[k * d + n + j]))
                .sum::<f64>();
        }
        let local = HPoint::from_parts_unchecked(zk, t);
        out.push(p * &dilate_unchecked(scale, &local));
    }
    out
}

impl From<Vec<HPoint>> for HorizontalPath {
    fn from(waypoints: Vec<HPoint>) -> Self {
        Self { waypoints }
    }
}

/// Runs the estimator on an increasing ladder of segment counts and keeps the
/// running minimum, so the reported sequence never increases.
pub fn cc_distance_ladder(
    p: &HPoint,
    q: &HPoint,
    ladder: &[usize],
    opts: &CcOptions,
) -> Result<Vec<CcEstimate>> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("ladder", "segment ladder must be non-empty and increasing"));
    }
    let mut out: Vec<CcEstimate> = Vec::with_capacity(ladder.len());
    for &segments in ladder {
        let mut est = cc_distance_estimate(p, q, &CcOptions { segments, ..opts.clone() })?;
        if let Some(prev) = out.last() {
            if prev.distance < est.distance {
                est.distance = prev.distance;
                est.path = prev.path.clone();
            }
        }
        out.push(est);
    }
    Ok(out)
}

/// Empirical constants of `c_1 d_K <= d_cc <= c_2 d_K` over random pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEstimate {
    /// Smallest sampled `d_cc / d_K`.
    pub lower: f64,
    /// Largest sampled `d_cc / d_K`.
    pub upper: f64,
    pub lower_witness: (HPoint, HPoint),
    pub upper_witness: (HPoint, HPoint),
    pub pairs: usize,
    /// Pairs whose optimizer did not meet the endpoint constraint.
    pub unconverged: usize,
    pub sample_radius: f64,
    pub seed: u64,
}

/// Samples `pairs` Haar-uniform pairs in `B_K(0, radius)` and reports the
/// extreme ratios `d_cc / d_K`. Each pair runs the optimizer with its own
/// seed.
pub fn metric_comparison(n: usize, pairs: usize, radius: f64, opts: &CcOptions, seed: u64) -> Result<ComparisonEstimate> {
    if pairs == 0 {
        return Err(invalid("pairs", "need at least one pair"));
    }
    let ball = super::Ball::centered(n, radius, super::MetricKind::Koranyi)?;
    let left = super::ball_sample_interior(&ball, pairs, crate::rng::derive_seed(seed, &[1]))?;
    let right = super::ball_sample_interior(&ball, pairs, crate::rng::derive_seed(seed, &[2]))?;
    let rows: Vec<(f64, bool)> = left
        .par_iter()
        .zip(right.par_iter())
        .enumerate()
        .map(|(i, (p, q))| {
            let dk = super::koranyi_distance(p, q)?;
            let o = CcOptions {
                seed: crate::rng::derive_seed(seed, &[3, i as u64]),
                keep_path: false,
                ..opts.clone()
            };
            let est = cc_distance_estimate(p, q, &o)?;
            let ratio = if dk > 0.0 { est.distance / dk } else { 1.0 };
            Ok((ratio, est.converged))
        })
        .collect::<Result<_>>()?;
    let (mut lo, mut hi) = (0, 0);
    for (i, (r, _)) in rows.iter().enumerate() {
        if *r < rows[lo].0 {
            lo = i;
        }
        if *r > rows[hi].0 {
            hi = i;
        }
    }
    Ok(ComparisonEstimate {
        lower: rows[lo].0,
        upper: rows[hi].0,
        lower_witness: (left[lo].clone(), right[lo].clone()),
        upper_witness: (left[hi].clone(), right[hi].clone()),
        pairs,
        unconverged: rows.iter().filter(|r| !r.1).count(),
        sample_radius: radius,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::multiply;
    use crate::metrics::koranyi_distance;
    use approx::assert_relative_eq;

    #[test]
    fn comparison_constants_bracket_the_axes() {
        // Horizontal increments have ratio 1, vertical ones sqrt(pi).
        let est = metric_comparison(1, 200, 10.0, &CcOptions::default(), 5).unwrap();
        assert!(est.lower >= 1.0 - 1e-6 && est.lower < 1.1, "{}", est.lower);
        assert!(est.upper <= std::f64::consts::PI.sqrt() * 1.01 && est.upper > 1.3, "{}", est.upper);
        assert_eq!(est.unconverged, 0);
    }

    fn regular_polygon_perimeter(segments: usize) -> f64 {
        // Perimeter of the regular N-gon with area 1/4.
        let nf = segments as f64;
        (nf * (std::f64::consts::PI / nf).tan()).sqrt()
    }

    #[test]
    fn horizontal_target_is_a_straight_segment() {
        for a in [0.3, 1.0, 4.0] {
            let est = cc_distance_estimate(&HPoint::identity(1), &HPoint::h1(a, 0.0, 0.0), &CcOptions::default()).unwrap();
            assert_relative_eq!(est.distance, a, max_relative = 1e-9);
            assert!(est.converged);
        }
    }

    #[test]
    fn vertical_unit_target_is_the_regular_polygon() {
        let est = cc_distance_estimate(&HPoint::identity(1), &HPoint::h1(0.0, 0.0, 1.0), &CcOptions::default()).unwrap();
        assert!(est.hard_case);
        assert_relative_eq!(est.distance, regular_polygon_perimeter(32), max_relative = 1e-8);
        assert!((est.distance - std::f64::consts::PI.sqrt()).abs() / std::f64::consts::PI.sqrt() < 0.01);
        assert_eq!(est.best_start, 0);
    }

    #[test]
    fn negative_height_has_the_same_length() {
        let up = cc_distance_estimate(&HPoint::identity(1), &HPoint::h1(0.0, 0.0, 2.0), &CcOptions::default()).unwrap();
        let down = cc_distance_estimate(&HPoint::identity(1), &HPoint::h1(0.0, 0.0, -2.0), &CcOptions::default()).unwrap();
        assert_relative_eq!(up.distance, down.distance, max_relative = 1e-9);
    }

    #[test]
    fn equal_points_are_at_distance_zero() {
        let p = HPoint::h1(1.0, 2.0, 3.0);
        assert_eq!(cc_distance_estimate(&p, &p, &CcOptions::default()).unwrap().distance, 0.0);
    }

    #[test]
    fn descent_restarts_never_beat_the_dual_solution() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..20 {
            let q = HPoint::random_gaussian(1, 1.0, &mut rng);
            let est = cc_distance_estimate(&HPoint::identity(1), &q, &CcOptions::default()).unwrap();
            assert_eq!(est.best_start, 0, "restart beat dual at {q}");
        }
    }

    #[test]
    fn path_is_horizontal_and_hits_the_target() {
        let p = HPoint::h1(0.5, -0.25, 1.0);
        let q = HPoint::h1(-0.3, 0.9, -2.0);
        let opts = CcOptions {
            keep_path: true,
            ..CcOptions::default()
        };
        let est = cc_distance_estimate(&p, &q, &opts).unwrap();
        let path = est.path.unwrap();
        assert!(path.horizontality_residual() < 1e-9);
        assert_relative_eq!(path.length(), est.distance, max_relative = 1e-9);
        let end = path.waypoints.last().unwrap();
        assert!(koranyi_distance(end, &q).unwrap() < 1e-6);
        assert_eq!(path.waypoints[0], p);
    }

    #[test]
    fn works_in_higher_dimension() {
        let mut q = HPoint::identity(2);
        q = multiply(&q, &HPoint::new(vec![Complex64::new(0.0, 0.0); 2], 1.0).unwrap()).unwrap();
        let est = cc_distance_estimate(&HPoint::identity(2), &q, &CcOptions::default()).unwrap();
        // In H^n the vertical geodesic still lives in a single plane.
        assert_relative_eq!(est.distance, regular_polygon_perimeter(32), max_relative = 1e-8);
    }

    #[test]
    fn ladder_is_monotone() {
        let q = HPoint::h1(0.2, 0.1, 0.7);
        let ladder = cc_distance_ladder(&HPoint::identity(1), &q, &[4, 8, 16, 32, 64], &CcOptions::default()).unwrap();
        for w in ladder.windows(2) {
            assert!(w[1].distance <= w[0].distance);
        }
    }

    #[test]
    fn rejects_too_few_segments() {
        let opts = CcOptions {
            segments: 1,
            ..CcOptions::default()
        };
        assert!(cc_distance_estimate(&HPoint::identity(1), &HPoint::h1(1.0, 0.0, 0.0), &opts).is_err());
    }
}
