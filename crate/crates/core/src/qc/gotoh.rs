use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distortion::{lambda_max_search, LambdaOptions};
use crate::bmo::{ball_seed, BallFamily};
use crate::error::{invalid, HqcError, Result};
use crate::group::{dilate, increment, multiply, HPoint};
use crate::maps::MapDescriptor;
use crate::measure::{density_in_ball, image_density_in_ball, DensityEstimate, MeasurableSet};
use crate::metrics::{koranyi_distance, Ball, MetricKind};
use crate::rng::derive_seed;

/// `sup_B min_i mu(E_i n B) / mu(B)` over a finite family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GotohValue {
    pub value: f64,
    pub std_error: f64,
    pub argmax: Ball,
    pub densities: (DensityEstimate, DensityEstimate),
    pub balls: usize,
    pub samples: usize,
    pub seed: u64,
}

fn sup_min<F>(family: &BallFamily, samples: usize, seed: u64, density: F) -> Result<GotohValue>
where
    F: Fn(usize, &Ball, u64) -> Result<DensityEstimate> + Sync,
{
    let per_ball: Vec<(DensityEstimate, DensityEstimate)> = family
        .balls()
        .par_iter()
        .map(|b| {
            let s = ball_seed(seed, b);
            Ok((density(0, b, derive_seed(s, &[1]))?, density(1, b, derive_seed(s, &[2]))?))
        })
        .collect::<Result<_>>()?;
    let min = |p: &(DensityEstimate, DensityEstimate)| p.0.value.min(p.1.value);
    let mut best = 0;
    for (i, p) in per_ball.iter().enumerate() {
        if min(p) > min(&per_ball[best]) {
            best = i;
        }
    }
    let pair = per_ball[best].clone();
    let std_error = if pair.0.value <= pair.1.value {
        pair.0.std_error
    } else {
        pair.1.std_error
    };
    Ok(GotohValue {
        value: min(&pair),
        std_error,
        argmax: family.balls()[best].clone(),
        densities: pair,
        balls: family.len(),
        samples,
        seed,
    })
}

pub fn gotoh_functional(
    e1: &MeasurableSet,
    e2: &MeasurableSet,
    family: &BallFamily,
    samples: usize,
    seed: u64,
) -> Result<GotohValue> {
    let sets = [e1, e2];
    sup_min(family, samples, seed, |i, b, s| density_in_ball(sets[i], b, samples, s))
}

/// The same functional for the images `f(E_1)`, `f(E_2)`.
pub fn gotoh_image_functional(
    f: &MapDescriptor,
    e1: &MeasurableSet,
    e2: &MeasurableSet,
    family: &BallFamily,
    samples: usize,
    seed: u64,
) -> Result<GotohValue> {
    let sets = [e1, e2];
    sup_min(family, samples, seed, |i, b, s| image_density_in_ball(sets[i], f, b, samples, s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GotohOptions {
    /// Density samples per (set, ball).
    pub samples: usize,
    pub k_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// Width, in standard errors, of the band allowed to each side.
    pub sigmas: f64,
}

impl Default for GotohOptions {
    fn default() -> Self {
        Self {
            samples: 20_000,
            k_grid: (0..=10).map(|k| 2f64.powi(k)).collect(),
            alpha_grid: vec![1.0, 0.5, 0.25, 0.125],
            sigmas: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequiredK {
    pub alpha: f64,
    /// Smallest grid `K` that works; `None` when no grid value does.
    pub k: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GotohReport {
    pub pair: usize,
    pub sets: (String, String),
    pub left: GotohValue,
    pub right: GotohValue,
    pub required: Vec<RequiredK>,
    /// First `(K, alpha)` in grid order (alpha, then K) that works.
    pub satisfied: Option<(f64, f64)>,
    pub unsat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GotohCheck {
    pub map: String,
    pub reports: Vec<GotohReport>,
    /// Per alpha, the smallest grid `K` working for every pair.
    pub required: Vec<RequiredK>,
    pub satisfied: Option<(f64, f64)>,
    pub unsat: bool,
    pub left_family: BallFamily,
    pub right_family: BallFamily,
    pub samples: usize,
    pub seed: u64,
}

/// `left <= K right^alpha`, each side moved by its band towards passing.
fn satisfies(left: &GotohValue, right: &GotohValue, k: f64, alpha: f64, sigmas: f64) -> bool {
    let lo = (left.value - sigmas * left.std_error).max(0.0);
    let hi = (right.value + sigmas * right.std_error).min(1.0);
    lo <= k * hi.powf(alpha)
}

fn required(opts: &GotohOptions, ok: impl Fn(f64, f64) -> bool) -> Vec<RequiredK> {
    opts.alpha_grid
        .iter()
        .map(|&alpha| RequiredK {
            alpha,
            k: opts.k_grid.iter().copied().find(|&k| ok(k, alpha)),
        })
        .collect()
}

fn first_satisfied(required: &[RequiredK]) -> Option<(f64, f64)> {
    required.iter().find_map(|r| r.k.map(|k| (k, r.alpha)))
}

/// Checks the two-set density inequality for `f` on every pair. The left side
/// uses `left_family` and the sets; the right side uses `right_family` and
/// the images. UNSAT within the grid is a report, not a disproof.
pub fn gotoh_check(
    f: &MapDescriptor,
    pairs: &[(MeasurableSet, MeasurableSet)],
    left_family: &BallFamily,
    right_family: &BallFamily,
    opts: &GotohOptions,
    seed: u64,
) -> Result<GotohCheck> {
    if !f.has_inverse() {
        return Err(HqcError::MissingInverse { map: f.name() });
    }
    if pairs.is_empty() || opts.k_grid.is_empty() || opts.alpha_grid.is_empty() {
        return Err(invalid("gotoh", "need at least one pair and a non-empty grid"));
    }
    let mut k_grid = opts.k_grid.clone();
    k_grid.sort_by(f64::total_cmp);
    let opts = GotohOptions { k_grid, ..opts.clone() };

    let reports: Vec<GotohReport> = pairs
        .iter()
        .enumerate()
        .map(|(j, (e1, e2))| {
            // Same seed on both sides: for the identity the two sides draw
            // the same points.
            let s = derive_seed(seed, &[j as u64]);
            let left = gotoh_functional(e1, e2, left_family, opts.samples, s)?;
            let right = gotoh_image_functional(f, e1, e2, right_family, opts.samples, s)?;
            let required = required(&opts, |k, a| satisfies(&left, &right, k, a, opts.sigmas));
            let satisfied = first_satisfied(&required);
            Ok(GotohReport {
                pair: j,
                sets: (e1.name(), e2.name()),
                left,
                right,
                unsat: satisfied.is_none(),
                satisfied,
                required,
            })
        })
        .collect::<Result<_>>()?;
    let required = required(&opts, |k, a| {
        reports
            .iter()
            .all(|r| satisfies(&r.left, &r.right, k, a, opts.sigmas))
    });
    let satisfied = first_satisfied(&required);
    Ok(GotohCheck {
        map: f.name(),
        reports,
        unsat: satisfied.is_none(),
        satisfied,
        required,
        left_family: left_family.clone(),
        right_family: right_family.clone(),
        samples: opts.samples,
        seed,
    })
}

/// Balls centered at `a`, `b` and three points between them along the
/// dilation ray from `a`, with radii `d(a, b)` times `factors`.
pub fn bridge_family(a: &HPoint, b: &HPoint, factors: &[f64]) -> Result<BallFamily> {
    let d = koranyi_distance(a, b)?;
    if !(d > 0.0) {
        return Err(invalid("bridge", "endpoints coincide"));
    }
    let rel = increment(b, a)?;
    let mut centers = vec![a.clone()];
    for s in [0.25, 0.5, 0.75] {
        centers.push(multiply(a, &dilate(s, &rel)?)?);
    }
    centers.push(b.clone());
    let mut balls = Vec::new();
    for c in &centers {
        for k in factors {
            balls.push(Ball::new(c.clone(), k * d, MetricKind::Koranyi)?);
        }
    }
    BallFamily::new(balls)
}

const BRIDGE: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

/// `E_1 = B(at delta_{15r/16}(v), r/16)`, `E_2 = B(at, r/16)`.
pub fn necessity_pair(at: &HPoint, v: &HPoint, r: f64) -> Result<(Ball, Ball)> {
    let x = multiply(at, &dilate(15.0 * r / 16.0, v)?)?;
    Ok((
        Ball::new(x, r / 16.0, MetricKind::Koranyi)?,
        Ball::new(at.clone(), r / 16.0, MetricKind::Koranyi)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GotohLadderRow {
    pub r: f64,
    pub direction: HPoint,
    pub check: GotohCheck,
    /// Smallest grid `K` at `alpha = 1`; `None` is UNSAT.
    pub best_k: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GotohLadder {
    pub at: HPoint,
    pub rows: Vec<GotohLadderRow>,
    /// `best_k` never drops as `r` shrinks (UNSAT above every K) and ends
    /// above where it started.
    pub grows: bool,
}

/// Necessity-style pairs around `at` on a shrinking ladder. At each `r` the
/// direction is the maximizer of the blow-up of `f` at scale `r`; the left
/// family bridges `E_2` to `E_1` and contains `B(at, r)`, the right family
/// bridges `f(at)` to `f(x)`.
pub fn gotoh_ladder(
    f: &MapDescriptor,
    at: &HPoint,
    radii: &[f64],
    opts: &GotohOptions,
    lambda: &LambdaOptions,
    seed: u64,
) -> Result<GotohLadder> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("radii", "radius ladder must be non-empty and strictly decreasing"));
    }
    if !opts.alpha_grid.contains(&1.0) {
        return Err(invalid("alpha_grid", "the ladder tracks K at alpha = 1"));
    }
    let n = at.dim();
    let rows = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let s = derive_seed(seed, &[k as u64]);
            let v = lambda_max_search(&f.blow_up(at, r)?, n, lambda, derive_seed(s, &[0]))?.argmax;
            let (e1, e2) = necessity_pair(at, &v, r)?;
            let left = bridge_family(e2.center(), e1.center(), &BRIDGE)?
                .union(&BallFamily::new(vec![Ball::new(at.clone(), r, MetricKind::Koranyi)?])?);
            let right = bridge_family(&f.forward(e2.center())?, &f.forward(e1.center())?, &BRIDGE)?;
            let pair = (MeasurableSet::ball(e1), MeasurableSet::ball(e2));
            let check = gotoh_check(f, &[pair], &left, &right, opts, derive_seed(s, &[1]))?;
            let best_k = check.required.iter().find(|q| q.alpha == 1.0).and_then(|q| q.k);
            Ok(GotohLadderRow {
                r,
                direction: v,
                check,
                best_k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let key = |k: Option<f64>| k.unwrap_or(f64::INFINITY);
    let grows = rows.windows(2).all(|w| key(w[1].best_k) >= key(w[0].best_k))
        && key(rows[rows.len() - 1].best_k) > key(rows[0].best_k);
    Ok(GotohLadder {
        at: at.clone(),
        rows,
        grows,
    })
}
