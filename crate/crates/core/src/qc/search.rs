//! Sampled extremes of a function on a metric sphere, with local refinement.

use std::sync::atomic::{AtomicUsize, Ordering};

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{HqcError, Result};
use crate::group::{dilate_unchecked, multiply, HPoint};
use crate::metrics::sampling::axis_directions;
use crate::metrics::{koranyi_norm, norm, unit_sphere_point, MetricKind};
use crate::rng::{batched, stream_rng};

/// Perturbations tried per refinement round.
pub(crate) const CANDIDATES: usize = 32;
const START_SIGMA: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Goal {
    Max,
    Min,
}

impl Goal {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Goal::Max => a > b,
            Goal::Min => a < b,
        }
    }
}

/// The sphere `d(center, x) = radius`, addressed by unit Koranyi directions.
pub(crate) struct Sphere<'a> {
    pub center: &'a HPoint,
    pub radius: f64,
    pub metric: MetricKind,
}

impl Sphere<'_> {
    pub fn point(&self, omega: &HPoint) -> Result<HPoint> {
        let scale = match self.metric {
            MetricKind::Koranyi => self.radius,
            MetricKind::Cc => self.radius / norm(MetricKind::Cc, omega)?,
        };
        multiply(self.center, &dilate_unchecked(scale, omega))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Probe {
    pub omega: HPoint,
    pub value: f64,
}

/// Axis directions followed by `samples` uniform random ones.
pub(crate) fn directions(n: usize, samples: usize, seed: u64) -> Vec<HPoint> {
    let mut dirs = axis_directions(n);
    for chunk in batched(seed, samples, |rng, k, _| {
        (0..k).map(|_| unit_sphere_point(n, rng)).collect::<Vec<_>>()
    }) {
        dirs.extend(chunk);
    }
    dirs
}

pub(crate) fn evaluate<F>(dirs: &[HPoint], objective: &F) -> Result<Vec<f64>>
where
    F: Fn(&HPoint) -> Result<f64> + Sync,
{
    dirs.par_iter().map(objective).collect()
}

/// Index of the best value; the first one wins ties.
pub(crate) fn best_index(values: &[f64], goal: Goal) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if goal.better(*v, values[best]) {
            best = i;
        }
    }
    best
}

fn perturb<R: Rng + ?Sized>(omega: &HPoint, sigma: f64, rng: &mut R) -> HPoint {
    let c: Vec<f64> = omega
        .coords()
        .iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let p = HPoint::from_coords(&c).expect("finite perturbation");
    let k = koranyi_norm(&p);
    if k > 0.0 {
        dilate_unchecked(1.0 / k, &p)
    } else {
        omega.clone()
    }
}

/// Random local search from `start`. Improvements are kept at the current
/// step size, failures halve it. Returns the best probe and the number of
/// evaluations spent.
pub(crate) fn refine<F>(start: Probe, goal: Goal, rounds: usize, seed: u64, objective: &F) -> Result<(Probe, usize)>
where
    F: Fn(&HPoint) -> Result<f64> + Sync,
{
    let mut best = start;
    let mut sigma = START_SIGMA;
    for round in 0..rounds {
        let mut rng = stream_rng(seed, round as u64);
        let cands: Vec<HPoint> = (0..CANDIDATES).map(|_| perturb(&best.omega, sigma, &mut rng)).collect();
        let vals = evaluate(&cands, objective)?;
        let i = best_index(&vals, goal);
        if goal.better(vals[i], best.value) {
            best = Probe {
                omega: cands[i].clone(),
                value: vals[i],
            };
        } else {
            sigma *= 0.5;
        }
    }
    Ok((best, rounds * CANDIDATES))
}

struct Cost<'a, F> {
    objective: &'a F,
    sign: f64,
    calls: &'a AtomicUsize,
}

fn onto_sphere(c: &[f64]) -> Option<HPoint> {
    let p = HPoint::from_coords(c).ok()?;
    let k = koranyi_norm(&p);
    (k > 0.0).then(|| dilate_unchecked(1.0 / k, &p))
}

impl<F> CostFunction for Cost<'_, F>
where
    F: Fn(&HPoint) -> Result<f64> + Sync,
{
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, c: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let Some(omega) = onto_sphere(c) else {
            return Ok(f64::INFINITY);
        };
        match (self.objective)(&omega) {
            Ok(v) if v.is_finite() => Ok(self.sign * v),
            Ok(_) => Ok(f64::INFINITY),
            Err(e) => Err(argmin::core::Error::msg(e.to_string())),
        }
    }
}

/// Nelder-Mead on the coordinates of the direction, projected radially onto
/// the unit sphere; restarted with a shrinking simplex. Deterministic.
pub(crate) fn polish<F>(start: Probe, goal: Goal, restarts: usize, iters: u64, objective: &F) -> Result<(Probe, usize)>
where
    F: Fn(&HPoint) -> Result<f64> + Sync,
{
    let sign = match goal {
        Goal::Max => -1.0,
        Goal::Min => 1.0,
    };
    let calls = AtomicUsize::new(0);
    let mut best = start;
    let mut size = 0.1;
    for _ in 0..restarts {
        let x0 = best.omega.coords();
        let mut simplex = vec![x0.clone()];
        for i in 0..x0.len() {
            let mut v = x0.clone();
            v[i] += size;
            simplex.push(v);
        }
        let cost = Cost {
            objective,
            sign,
            calls: &calls,
        };
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(0.0)
            .map_err(|e| HqcError::DegenerateImage(e.to_string()))?;
        let res = Executor::new(cost, solver)
            .configure(|state| state.max_iters(iters))
            .run()
            .map_err(|e| HqcError::DegenerateImage(format!("sphere search failed: {e}")))?;
        let state = res.state();
        if let (Some(p), v) = (state.best_param.as_ref(), state.best_cost) {
            let value = sign * v;
            if let Some(omega) = onto_sphere(p) {
                if goal.better(value, best.value) {
                    best = Probe { omega, value };
                }
            }
        }
        size *= 0.25;
    }
    Ok((best, calls.load(Ordering::Relaxed)))
}
