//! Mean oscillation, BMO norm estimates over finite ball families, and
//! John-Nirenberg tail fits.
//!
//! The supremum over all balls is replaced by a finite family. Each ball gets
//! a seed derived from the ball itself, so a ball contributes the same value in
//! every family containing it and enlarging a family can only raise the
//! maximum. The estimate is therefore a lower bound for the true norm.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::ScalarField;
use crate::group::HPoint;
use crate::maps::MapDescriptor;
use crate::measure::draw_regular;
use crate::metrics::{Ball, BoundSide, MetricKind};
use crate::rng::{batched, derive_seed, hash_f64s, stream_rng};
use crate::stats::{linear_fit, log_log_fit, LinearFit, RunningStats};

pub use crate::fields::pushforward;

/// Serializable description of a ball family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Centers on `per_axis^{2n+1}` lattice points `|x_i|, |y_i| <= extent`,
    /// `|t| <= extent^2` (left-translated by `center`), crossed with the
    /// geometric radius ladder `r_min, r_min * ratio, .., <= r_max`.
    Lattice {
        #[serde(default = "default_per_axis")]
        per_axis: usize,
        #[serde(default = "default_extent")]
        extent: f64,
        #[serde(default)]
        center: Option<HPoint>,
        #[serde(default = "default_r_min")]
        r_min: f64,
        #[serde(default = "default_r_max")]
        r_max: f64,
        #[serde(default = "default_ratio")]
        ratio: f64,
        #[serde(default)]
        metric: MetricKind,
    },
    Explicit {
        balls: Vec<Ball>,
    },
}

fn default_per_axis() -> usize {
    5
}
fn default_extent() -> f64 {
    4.0
}
fn default_r_min() -> f64 {
    1.0 / 16.0
}
fn default_r_max() -> f64 {
    8.0
}
fn default_ratio() -> f64 {
    2.0
}

impl FamilySpec {
    pub fn lattice_default() -> Self {
        FamilySpec::Lattice {
            per_axis: default_per_axis(),
            extent: default_extent(),
            center: None,
            r_min: default_r_min(),
            r_max: default_r_max(),
            ratio: default_ratio(),
            metric: MetricKind::Koranyi,
        }
    }
}

/// `r_min, r_min * ratio, ...` up to `r_max` (inclusive up to round-off).
pub fn radius_ladder(r_min: f64, r_max: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_max >= r_min && ratio > 1.0 && r_max.is_finite()) {
        return Err(invalid("radii", format!("bad ladder {r_min}..{r_max} x{ratio}")));
    }
    let mut out = Vec::new();
    let mut r = r_min;
    while r <= r_max * (1.0 + 1e-12) {
        out.push(r);
        r *= ratio;
    }
    Ok(out)
}

/// A finite, non-empty list of balls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    balls: Vec<Ball>,
}

impl BallFamily {
    pub fn new(balls: Vec<Ball>) -> Result<Self> {
        if balls.is_empty() {
            return Err(invalid("family", "ball family is empty"));
        }
        let n = balls[0].dim();
        for b in &balls {
            b.check_dim(n)?;
        }
        Ok(Self { balls })
    }

    pub fn from_spec(spec: &FamilySpec, n: usize) -> Result<Self> {
        match spec {
            FamilySpec::Explicit { balls } => Self::new(balls.clone()),
            FamilySpec::Lattice {
                per_axis,
                extent,
                center,
                r_min,
                r_max,
                ratio,
                metric,
            } => {
                let radii = radius_ladder(*r_min, *r_max, *ratio)?;
                let base = center.clone().unwrap_or_else(|| HPoint::identity(n));
                if base.dim() != n {
                    return Err(invalid("center", "lattice center has the wrong dimension"));
                }
                Self::lattice(&base, *per_axis, *extent, &radii, *metric)
            }
        }
    }

    pub fn lattice(center: &HPoint, per_axis: usize, extent: f64, radii: &[f64], metric: MetricKind) -> Result<Self> {
        if per_axis == 0 || !(extent >= 0.0) {
            return Err(invalid("lattice", "need per_axis >= 1 and extent >= 0"));
        }
        let n = center.dim();
        let dims = 2 * n + 1;
        let tick = |k: usize, e: f64| {
            if per_axis == 1 {
                0.0
            } else {
                -e + 2.0 * e * k as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.pow(dims as u32);
        let mut balls = Vec::with_capacity(total * radii.len());
        for idx in 0..total {
            let mut rem = idx;
            let mut c = vec![0.0; dims];
            for (d, v) in c.iter_mut().enumerate() {
                let k = rem % per_axis;
                rem /= per_axis;
                *v = if d == dims - 1 { tick(k, extent * extent) } else { tick(k, extent) };
            }
            let p = center * &HPoint::from_coords(&c)?;
            for &r in radii {
                balls.push(Ball::new(p.clone(), r, metric)?);
            }
        }
        Self::new(balls)
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.balls[0].dim()
    }

    /// Distinct radii in increasing order.
    pub fn radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.balls.iter().map(|b| b.radius()).collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }

    /// Union with `other`, dropping exact duplicates.
    pub fn union(&self, other: &BallFamily) -> Self {
        let mut balls = self.balls.clone();
        for b in &other.balls {
            if !balls.contains(b) {
                balls.push(b.clone());
            }
        }
        Self { balls }
    }

    pub fn dilate(&self, delta: f64) -> Result<Self> {
        Self::new(self.balls.iter().map(|b| b.dilate(delta)).collect::<Result<_>>()?)
    }

    /// Image family under a catalog similarity: `f(B(c, r)) = B(f(c), k r)`.
    pub fn image(&self, f: &MapDescriptor) -> Result<Self> {
        let balls = self
            .balls
            .iter()
            .map(|b| {
                f.ball_image(b)
                    .ok_or_else(|| invalid("map", format!("{} does not map balls to balls", f.name())))
            })
            .collect::<Result<_>>()?;
        Self::new(balls)
    }
}

/// `avg_B |u - u_B|` with its Monte Carlo error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `u_B`.
    pub mean: f64,
    pub samples: usize,
    pub seed: u64,
}

fn sample_values(u: &ScalarField, ball: &Ball, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let chunks: Vec<Result<Vec<f64>>> = batched(seed, samples, |rng, k, _| {
        (0..k).map(|_| u.eval(&draw_regular(u, ball, rng)?)).collect()
    });
    let mut out = Vec::with_capacity(samples);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Plug-in estimate of `avg_B |u - u_B|` from one sample.
pub fn mean_oscillation(u: &ScalarField, ball: &Ball, samples: usize, seed: u64) -> Result<OscillationEstimate> {
    if samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    if u.is_constant() {
        let value = u.eval(ball.center()).unwrap_or(0.0);
        return Ok(OscillationEstimate {
            value: 0.0,
            std_error: 0.0,
            mean: value,
            samples,
            seed,
        });
    }
    let values = sample_values(u, ball, samples, seed)?;
    let mean: RunningStats = values.iter().copied().collect();
    let dev: RunningStats = values.iter().map(|v| (v - mean.mean).abs()).collect();
    Ok(OscillationEstimate {
        value: dev.mean,
        std_error: dev.std_error(),
        mean: mean.mean,
        samples,
        seed,
    })
}

pub(crate) fn ball_seed(seed: u64, ball: &Ball) -> u64 {
    let mut key = ball.center().coords();
    key.push(ball.radius());
    key.push(match ball.metric() {
        MetricKind::Koranyi => 0.0,
        MetricKind::Cc => 1.0,
    });
    derive_seed(seed, &[hash_f64s(key)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmoOptions {
    pub samples_per_ball: usize,
    pub refine_rounds: usize,
    pub refine_candidates: usize,
    /// Top-decade log-log slope of the per-radius maximum above which the
    /// estimator reports "not BMO".
    pub growth_threshold: f64,
}

impl Default for BmoOptions {
    fn default() -> Self {
        Self {
            samples_per_ball: 2000,
            refine_rounds: 3,
            refine_candidates: 8,
            growth_threshold: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BmoVerdict {
    Bounded,
    /// Per-radius maxima keep growing over the top decade of the ladder.
    NotBmo { slope: f64 },
    /// Ladder too short to judge growth.
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmoEstimate {
    /// Maximum over the family; a lower bound for the norm.
    pub value: f64,
    pub side: BoundSide,
    pub argmax: Ball,
    pub argmax_std_error: f64,
    /// `max(value, best ball found by local perturbation of the argmax)`.
    pub refined: f64,
    pub refined_ball: Ball,
    /// `(radius, max oscillation over balls of that radius)`.
    pub per_radius: Vec<(f64, f64)>,
    pub growth: Option<LinearFit>,
    pub verdict: BmoVerdict,
    pub balls: usize,
    pub samples_per_ball: usize,
    pub seed: u64,
}

/// `max_{B in family} avg_B |u - u_B|`, with ties broken by ball index.
pub fn bmo_norm_estimate(u: &ScalarField, family: &BallFamily, opts: &BmoOptions, seed: u64) -> Result<BmoEstimate> {
    let osc: Vec<OscillationEstimate> = family
        .balls()
        .par_iter()
        .map(|b| mean_oscillation(u, b, opts.samples_per_ball, ball_seed(seed, b)))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, o) in osc.iter().enumerate() {
        if o.value > osc[best].value {
            best = i;
        }
    }
    let argmax = family.balls()[best].clone();

    let radii = family.radii();
    let per_radius: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let m = family
                .balls()
                .iter()
                .zip(&osc)
                .filter(|(b, _)| b.radius() == r)
                .map(|(_, o)| o.value)
                .fold(0.0, f64::max);
            (r, m)
        })
        .collect();
    let r_max = radii[radii.len() - 1];
    let top: Vec<&(f64, f64)> = per_radius.iter().filter(|(r, _)| *r >= r_max / 8.0 * (1.0 - 1e-12)).collect();
    let growth = if top.len() >= 2 && top.iter().all(|(_, m)| *m > 0.0) {
        log_log_fit(&top.iter().map(|p| p.0).collect::<Vec<_>>(), &top.iter().map(|p| p.1).collect::<Vec<_>>())
    } else {
        None
    };
    let verdict = if u.is_constant() || per_radius.iter().all(|(_, m)| *m == 0.0) {
        BmoVerdict::Bounded
    } else {
        match &growth {
            Some(g) if g.slope > opts.growth_threshold => BmoVerdict::NotBmo { slope: g.slope },
            Some(_) => BmoVerdict::Bounded,
            None => BmoVerdict::Undetermined,
        }
    };

    let (refined, refined_ball) = refine(u, &argmax, osc[best].value, opts, seed)?;
    Ok(BmoEstimate {
        value: osc[best].value,
        side: BoundSide::Lower,
        argmax,
        argmax_std_error: osc[best].std_error,
        refined,
        refined_ball,
        per_radius,
        growth,
        verdict,
        balls: family.len(),
        samples_per_ball: opts.samples_per_ball,
        seed,
    })
}

fn refine(u: &ScalarField, start: &Ball, value: f64, opts: &BmoOptions, seed: u64) -> Result<(f64, Ball)> {
    let mut best = (value, start.clone());
    for round in 0..opts.refine_rounds {
        let step = 0.5 / (1 << round) as f64;
        let mut rng = stream_rng(derive_seed(seed, &[0xbe, round as u64]), 0);
        let center = best.1.clone();
        let candidates: Vec<Ball> = (0..opts.refine_candidates)
            .map(|_| {
                let r = center.radius();
                let mut c = center.center().coords();
                let last = c.len() - 1;
                for (i, v) in c.iter_mut().enumerate() {
                    let s = if i == last { step * r * r } else { step * r };
                    *v += s * (2.0 * rng.random::<f64>() - 1.0);
                }
                let radius = r * 2f64.powf(step * (2.0 * rng.random::<f64>() - 1.0));
                Ball::new(HPoint::from_coords(&c)?, radius, center.metric())
            })
            .collect::<Result<_>>()?;
        let vals: Vec<f64> = candidates
            .par_iter()
            .map(|b| mean_oscillation(u, b, opts.samples_per_ball, ball_seed(seed, b)).map(|o| o.value))
            .collect::<Result<_>>()?;
        for (b, v) in candidates.into_iter().zip(vals) {
            if v > best.0 {
                best = (v, b);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnFitReport {
    /// Fitted decay rate per unit `lambda / ||u||`; `None` when the tail is
    /// too thin to fit.
    pub a_hat: Option<f64>,
    /// Largest `A` with `tail(lambda) <= 2 exp(-A lambda / ||u||)` at every
    /// grid point; `None` when no deviation exceeds the grid.
    pub envelope_a: Option<f64>,
    pub prefactor: f64,
    pub r_squared: f64,
    pub lambda_range: (f64, f64),
    /// `(lambda, empirical tail fraction)` for every grid point.
    pub points: Vec<(f64, f64)>,
    /// Points used in the fit (tail with at least `min_hits` samples).
    pub fitted_points: usize,
    pub pass: bool,
    /// Empty tail: nothing to fit.
    pub trivial: bool,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JnOptions {
    /// Explicit lambda grid; default 16 geometric points in
    /// `[0.25, 8] * ||u||`.
    pub lambdas: Option<Vec<f64>>,
    pub samples: usize,
    pub min_hits: usize,
    pub min_r_squared: f64,
}

impl Default for JnOptions {
    fn default() -> Self {
        Self {
            lambdas: None,
            samples: 20_000,
            min_hits: 10,
            min_r_squared: 0.9,
        }
    }
}

/// Fits `mu({|u - u_B| > lambda}) / mu(B) ~ C exp(-A lambda / ||u||)`.
pub fn jn_tail_fit(u: &ScalarField, ball: &Ball, bmo_norm: f64, opts: &JnOptions, seed: u64) -> Result<JnFitReport> {
    if !(bmo_norm > 0.0 && bmo_norm.is_finite()) {
        return Err(invalid("bmo_norm", "must be positive"));
    }
    if matches!(&opts.lambdas, Some(l) if l.is_empty()) {
        return Err(invalid("lambdas", "empty lambda grid"));
    }
    let values = if u.is_constant() {
        vec![0.0; opts.samples]
    } else {
        sample_values(u, ball, opts.samples, seed)?
    };
    let mean: RunningStats = values.iter().copied().collect();
    let dev: Vec<f64> = values.iter().map(|v| (v - mean.mean).abs()).collect();
    let lambdas = match &opts.lambdas {
        Some(l) => l.clone(),
        None => (0..16)
            .map(|k| bmo_norm * 0.25 * 32f64.powf(k as f64 / 15.0))
            .collect(),
    };
    let lambda_range = (
        lambdas.iter().copied().fold(f64::INFINITY, f64::min),
        lambdas.iter().copied().fold(0.0, f64::max),
    );
    let points: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| (l, dev.iter().filter(|d| **d > l).count() as f64 / dev.len() as f64))
        .collect();
    let min_frac = opts.min_hits as f64 / dev.len() as f64;
    let usable: Vec<&(f64, f64)> = points.iter().filter(|(_, t)| *t >= min_frac).collect();
    let envelope_a = points
        .iter()
        .filter(|(_, t)| *t > 0.0)
        .map(|(l, t)| (2.0 / t).ln() * bmo_norm / l)
        .reduce(f64::min);
    let base = JnFitReport {
        a_hat: None,
        envelope_a,
        prefactor: 0.0,
        r_squared: 1.0,
        lambda_range,
        points: points.clone(),
        fitted_points: usable.len(),
        pass: true,
        trivial: true,
        samples: dev.len(),
        seed,
    };
    if usable.len() < 2 {
        return Ok(base);
    }
    let xs: Vec<f64> = usable.iter().map(|(l, _)| l / bmo_norm).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, t)| t.ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| invalid("lambdas", "degenerate lambda grid"))?;
    let a_hat = -fit.slope;
    Ok(JnFitReport {
        a_hat: Some(a_hat),
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        pass: a_hat > 0.0 && fit.r_squared >= opts.min_r_squared,
        trivial: false,
        ..base
    })
}
