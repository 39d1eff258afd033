//! Diameters and distances of sets known through samples.
//!
//! A sampled maximum of pairwise distances can only under-estimate a
//! diameter, and a sampled minimum can only over-estimate a distance. Both are
//! tightened by a few rounds of local perturbation around the best pair, and
//! each estimate carries the side it bounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{distance, BoundSide, Ball, MetricKind};
use crate::error::{invalid, HqcError, Result};
use crate::group::HPoint;
use crate::rng::{batched, derive_seed, stream_rng};

const MAX_DRAWS_PER_POINT: usize = 10_000;

type Member<'a> = Box<dyn Fn(&HPoint) -> Result<bool> + Send + Sync + 'a>;
type Image<'a> = Box<dyn Fn(&HPoint) -> Result<HPoint> + Send + Sync + 'a>;

/// A set given either by explicit points or by a region of a bounding ball,
/// optionally pushed forward by a map. Samples are drawn in the region and
/// then mapped, so images never need an inverse.
pub enum PointSet<'a> {
    Points(Vec<HPoint>),
    Region {
        bound: Ball,
        member: Option<Member<'a>>,
        image: Option<Image<'a>>,
    },
}

impl<'a> PointSet<'a> {
    pub fn points(points: Vec<HPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("points", "point set is empty"));
        }
        Ok(PointSet::Points(points))
    }

    /// The ball itself.
    pub fn ball(bound: Ball) -> Self {
        PointSet::Region {
            bound,
            member: None,
            image: None,
        }
    }

    /// Points of `bound` accepted by `member`.
    pub fn region(bound: Ball, member: impl Fn(&HPoint) -> Result<bool> + Send + Sync + 'a) -> Self {
        PointSet::Region {
            bound,
            member: Some(Box::new(member)),
            image: None,
        }
    }

    /// Pushes the set forward by `f`.
    pub fn mapped(self, f: impl Fn(&HPoint) -> Result<HPoint> + Send + Sync + 'a) -> Result<Self> {
        match self {
            PointSet::Points(pts) => Ok(PointSet::Points(pts.iter().map(f).collect::<Result<_>>()?)),
            PointSet::Region { bound, member, image } => {
                let composed: Image<'a> = match image {
                    None => Box::new(f),
                    Some(g) => Box::new(move |p| f(&g(p)?)),
                };
                Ok(PointSet::Region {
                    bound,
                    member,
                    image: Some(composed),
                })
            }
        }
    }

    fn accepts(&self, p: &HPoint) -> Result<bool> {
        match self {
            PointSet::Points(_) => Ok(true),
            PointSet::Region { bound, member, .. } => {
                if !bound.contains(p)? {
                    return Ok(false);
                }
                match member {
                    Some(m) => m(p),
                    None => Ok(true),
                }
            }
        }
    }

    fn eval(&self, p: &HPoint) -> Result<HPoint> {
        match self {
            PointSet::Region { image: Some(f), .. } => f(p),
            _ => Ok(p.clone()),
        }
    }

    /// Draws a parameter point (before the image map).
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<HPoint> {
        match self {
            PointSet::Points(pts) => Ok(pts[rng.random_range(0..pts.len())].clone()),
            PointSet::Region { bound, .. } => {
                for _ in 0..MAX_DRAWS_PER_POINT {
                    let p = bound.sample_interior_with(rng)?;
                    if self.accepts(&p)? {
                        return Ok(p);
                    }
                }
                Err(HqcError::EmptySample {
                    what: format!("set inside {bound}"),
                    attempts: MAX_DRAWS_PER_POINT,
                })
            }
        }
    }

    /// All parameter points to compare: the explicit list, or `count` draws.
    fn params(&self, count: usize, seed: u64) -> Result<Vec<HPoint>> {
        match self {
            PointSet::Points(pts) => Ok(pts.clone()),
            PointSet::Region { .. } => {
                let chunks = batched(seed, count, |rng, k, _| {
                    (0..k).map(|_| self.draw(rng)).collect::<Result<Vec<_>>>()
                });
                let mut out = Vec::with_capacity(count);
                for c in chunks {
                    out.extend(c?);
                }
                Ok(out)
            }
        }
    }

    /// A coordinate perturbation of `p` of size about `step` that stays in
    /// the set, or `None` for explicit point sets.
    fn jitter(&self, p: &HPoint, step: f64, rng: &mut ChaCha8Rng) -> Result<Option<HPoint>> {
        let PointSet::Region { bound, .. } = self else {
            return Ok(None);
        };
        let scale = step * bound.radius();
        let mut c = p.coords();
        let last = c.len() - 1;
        for (i, v) in c.iter_mut().enumerate() {
            let s = if i == last { scale * (scale + 2.0 * bound.center().z_norm() + bound.radius()) } else { scale };
            *v += s * (2.0 * rng.random::<f64>() - 1.0);
        }
        let q = HPoint::from_coords(&c)?;
        Ok(self.accepts(&q)?.then_some(q))
    }
}

/// Sampling and refinement budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetBudget {
    /// Points drawn per set for the all-pairs pass.
    pub samples: usize,
    pub refine_rounds: usize,
    /// Perturbations tried per endpoint per refinement round.
    pub refine_samples: usize,
}

impl Default for SetBudget {
    fn default() -> Self {
        Self {
            samples: 1500,
            refine_rounds: 3,
            refine_samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetEstimate {
    pub value: f64,
    pub side: BoundSide,
    pub metric: MetricKind,
    pub pairs: usize,
    /// Value before local refinement.
    pub sampled: f64,
    pub witnesses: (HPoint, HPoint),
}

#[derive(Clone, Copy, PartialEq)]
enum Goal {
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

/// Best pair over `xs x ys` with a deterministic tie-break on indices.
fn best_pair(xs: &[HPoint], ys: &[HPoint], metric: MetricKind, goal: Goal, skip_diag: bool) -> Result<(f64, usize, usize)> {
    let rows: Vec<Result<Option<(f64, usize, usize)>>> = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(f64, usize, usize)> = None;
            let start = if skip_diag { i + 1 } else { 0 };
            for (j, y) in ys.iter().enumerate().skip(start) {
                let d = distance(metric, &xs[i], y)?;
                if best.is_none_or(|(b, _, _)| goal.better(d, b)) {
                    best = Some((d, i, j));
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for r in rows {
        if let Some(cand) = r? {
            if best.is_none_or(|(b, _, _)| goal.better(cand.0, b)) {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| invalid("set", "not enough points to form a pair"))
}

fn check_metric_budget(metric: MetricKind, budget: &SetBudget) -> usize {
    // CC distances cost a path solve each; cap the all-pairs pass.
    match metric {
        MetricKind::Koranyi => budget.samples,
        MetricKind::Cc => budget.samples.min(120),
    }
}

struct Search<'s, 'a> {
    a: &'s PointSet<'a>,
    b: &'s PointSet<'a>,
    metric: MetricKind,
    goal: Goal,
}

impl Search<'_, '_> {
    fn refine(&self, mut pa: HPoint, mut pb: HPoint, mut best: f64, budget: &SetBudget, seed: u64) -> Result<(f64, HPoint, HPoint)> {
        let mut ia = self.a.eval(&pa)?;
        let mut ib = self.b.eval(&pb)?;
        for round in 0..budget.refine_rounds {
            let step = 0.1 / (1 << round) as f64;
            let mut rng = stream_rng(derive_seed(seed, &[round as u64]), 0);
            for _ in 0..budget.refine_samples {
                if let Some(qa) = self.a.jitter(&pa, step, &mut rng)? {
                    let ja = self.a.eval(&qa)?;
                    let d = distance(self.metric, &ja, &ib)?;
                    if self.goal.better(d, best) {
                        (best, pa, ia) = (d, qa, ja);
                    }
                }
                if let Some(qb) = self.b.jitter(&pb, step, &mut rng)? {
                    let jb = self.b.eval(&qb)?;
                    let d = distance(self.metric, &ia, &jb)?;
                    if self.goal.better(d, best) {
                        (best, pb, ib) = (d, qb, jb);
                    }
                }
            }
        }
        Ok((best, ia, ib))
    }
}

/// Lower bound for the diameter of `set`.
pub fn set_diameter_estimate(set: &PointSet<'_>, metric: MetricKind, budget: &SetBudget, seed: u64) -> Result<SetEstimate> {
    let count = check_metric_budget(metric, budget);
    let params = set.params(count, derive_seed(seed, &[0]))?;
    let images = params.iter().map(|p| set.eval(p)).collect::<Result<Vec<_>>>()?;
    if images.len() < 2 {
        return Err(invalid("set", "diameter needs at least two points"));
    }
    let (sampled, i, j) = best_pair(&images, &images, metric, Goal::Max, true)?;
    let search = Search {
        a: set,
        b: set,
        metric,
        goal: Goal::Max,
    };
    let (value, wa, wb) = search.refine(params[i].clone(), params[j].clone(), sampled, budget, derive_seed(seed, &[1]))?;
    Ok(SetEstimate {
        value,
        side: BoundSide::Lower,
        metric,
        pairs: images.len() * (images.len() - 1) / 2,
        sampled,
        witnesses: (wa, wb),
    })
}

/// Upper bound for `dist(a, b) = inf d(x, y)`.
pub fn set_distance_estimate(
    a: &PointSet<'_>,
    b: &PointSet<'_>,
    metric: MetricKind,
    budget: &SetBudget,
    seed: u64,
) -> Result<SetEstimate> {
    let count = check_metric_budget(metric, budget);
    let pa = a.params(count, derive_seed(seed, &[0]))?;
    let pb = b.params(count, derive_seed(seed, &[1]))?;
    let ia = pa.iter().map(|p| a.eval(p)).collect::<Result<Vec<_>>>()?;
    let ib = pb.iter().map(|p| b.eval(p)).collect::<Result<Vec<_>>>()?;
    let (sampled, i, j) = best_pair(&ia, &ib, metric, Goal::Min, false)?;
    let search = Search { a, b, metric, goal: Goal::Min };
    let (value, wa, wb) = search.refine(pa[i].clone(), pb[j].clone(), sampled, budget, derive_seed(seed, &[2]))?;
    Ok(SetEstimate {
        value,
        side: BoundSide::Upper,
        metric,
        pairs: ia.len() * ib.len(),
        sampled,
        witnesses: (wa, wb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::dilate;
    use crate::metrics::koranyi_distance;

    #[test]
    fn koranyi_unit_ball_has_diameter_two() {
        let set = PointSet::ball(Ball::centered(1, 1.0, MetricKind::Koranyi).unwrap());
        let est = set_diameter_estimate(&set, MetricKind::Koranyi, &SetBudget::default(), 3).unwrap();
        assert_eq!(est.side, BoundSide::Lower);
        assert!(est.value <= 2.0 + 1e-12);
        assert!(est.value >= 2.0 * 0.98, "{}", est.value);
        assert!(est.value >= est.sampled);
    }

    #[test]
    fn distance_of_a_ball_to_itself_is_small() {
        let b = Ball::koranyi(HPoint::h1(1.0, 1.0, 0.5), 0.25).unwrap();
        let est = set_distance_estimate(&PointSet::ball(b.clone()), &PointSet::ball(b), MetricKind::Koranyi, &SetBudget::default(), 4).unwrap();
        assert_eq!(est.side, BoundSide::Upper);
        assert!(est.value < 0.25 * 0.05, "{}", est.value);
    }

    #[test]
    fn separated_balls_respect_the_triangle_sandwich() {
        // B(x, 1/16) and B(0, 1/16) with |x| = 15/16 on the horizontal axis.
        let x = HPoint::h1(15.0 / 16.0, 0.0, 0.0);
        let e1 = PointSet::ball(Ball::koranyi(x, 1.0 / 16.0).unwrap());
        let e2 = PointSet::ball(Ball::centered(1, 1.0 / 16.0, MetricKind::Koranyi).unwrap());
        let est = set_distance_estimate(&e1, &e2, MetricKind::Koranyi, &SetBudget::default(), 5).unwrap();
        assert!(est.value >= 13.0 / 16.0 - 1e-9);
        assert!(est.value <= 13.0 / 16.0 + 0.02, "{}", est.value);
        let (a, b) = &est.witnesses;
        assert!((koranyi_distance(a, b).unwrap() - est.value).abs() < 1e-12);
    }

    #[test]
    fn explicit_points_give_exact_diameter() {
        let pts = vec![HPoint::h1(0.0, 0.0, 0.0), HPoint::h1(1.0, 0.0, 0.0), HPoint::h1(0.0, 0.0, 16.0)];
        let est = set_diameter_estimate(&PointSet::points(pts).unwrap(), MetricKind::Koranyi, &SetBudget::default(), 0).unwrap();
        assert!((est.value - 257f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn mapped_sets_scale_with_dilation() {
        let base = || PointSet::ball(Ball::centered(1, 1.0, MetricKind::Koranyi).unwrap());
        let d1 = set_diameter_estimate(&base(), MetricKind::Koranyi, &SetBudget::default(), 8).unwrap();
        let mapped = base().mapped(|p| dilate(3.0, p)).unwrap();
        let d3 = set_diameter_estimate(&mapped, MetricKind::Koranyi, &SetBudget::default(), 8).unwrap();
        assert!((d3.value / d1.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_region_is_an_error() {
        let set = PointSet::region(Ball::centered(1, 1.0, MetricKind::Koranyi).unwrap(), |_| Ok(false));
        let budget = SetBudget {
            samples: 4,
            ..SetBudget::default()
        };
        assert!(matches!(
            set_diameter_estimate(&set, MetricKind::Koranyi, &budget, 0),
            Err(HqcError::EmptySample { .. })
        ));
    }
}
