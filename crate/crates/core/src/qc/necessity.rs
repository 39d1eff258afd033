use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distortion::{lambda_max_search, LambdaMax, LambdaOptions};
use crate::error::{invalid, HqcError, Result};
use crate::group::{dilate, HPoint, ValidatedHom};
use crate::maps::MapDescriptor;
use crate::measure::koranyi_ball_volume;
use crate::metrics::{
    ball_sample_interior, distance, set_diameter_estimate, set_distance_estimate, Ball, BoundSide, MetricKind,
    PointSet, SetBudget, SetEstimate,
};
use crate::rng::{batched, derive_seed};
use crate::stats::binomial_std_error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundnessOptions {
    /// Hit-or-miss samples for the image volume.
    pub volume_samples: usize,
    /// Budget for the image diameter.
    pub diameter: SetBudget,
}

impl Default for RoundnessOptions {
    fn default() -> Self {
        Self {
            volume_samples: 200_000,
            diameter: SetBudget::default(),
        }
    }
}

/// `|f(B)| / (diam f(B))^{2n+2}`.
///
/// The volume is hit-or-miss in a ball known to contain the image, with
/// membership tested through `f^{-1}`. The diameter is a lower bound, so
/// the ratio leans high.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundnessEstimate {
    pub ball: Ball,
    pub volume: f64,
    pub volume_std_error: f64,
    /// Sampling ball for the volume.
    pub bound: Ball,
    pub hits: usize,
    pub samples: usize,
    pub diameter: SetEstimate,
    pub ratio: f64,
    pub std_error: f64,
    pub side: BoundSide,
    pub seed: u64,
}

pub fn roundness_ratio(f: &MapDescriptor, ball: &Ball, opts: &RoundnessOptions, seed: u64) -> Result<RoundnessEstimate> {
    if ball.metric() != MetricKind::Koranyi {
        return Err(invalid("ball", "roundness is measured on Koranyi balls"));
    }
    if opts.volume_samples == 0 {
        return Err(invalid("volume_samples", "need at least one sample"));
    }
    if !f.has_inverse() {
        return Err(HqcError::MissingInverse { map: f.name() });
    }
    let bound = f
        .image_bound(ball)
        .ok_or_else(|| invalid("map", format!("no bounding ball is known for images under {}", f.name())))?;
    let n = ball.dim();
    let hits: Vec<Result<usize>> = batched(derive_seed(seed, &[0]), opts.volume_samples, |rng, k, _| {
        let mut hits = 0;
        for _ in 0..k {
            let p = bound.sample_interior_with(rng)?;
            if ball.contains(&f.inverse_eval(&p)?)? {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let hits = hits.into_iter().sum::<Result<usize>>()?;
    if hits == 0 {
        return Err(HqcError::DegenerateImage(format!(
            "no sample of {bound} fell in the image of {ball}"
        )));
    }
    let frac = hits as f64 / opts.volume_samples as f64;
    let outer = koranyi_ball_volume(n, bound.radius());
    let (volume, volume_std_error) = (outer * frac, outer * binomial_std_error(frac, opts.volume_samples));

    let image = PointSet::ball(ball.clone()).mapped(|p| f.forward(p))?;
    let diameter = set_diameter_estimate(&image, MetricKind::Koranyi, &opts.diameter, derive_seed(seed, &[1]))?;
    if !(diameter.value > 0.0) {
        return Err(HqcError::DegenerateImage(format!("image of {ball} has zero diameter")));
    }
    let scale = diameter.value.powi(2 * n as i32 + 2);
    Ok(RoundnessEstimate {
        ball: ball.clone(),
        volume,
        volume_std_error,
        bound,
        hits,
        samples: opts.volume_samples,
        ratio: volume / scale,
        std_error: volume_std_error / scale,
        diameter,
        side: BoundSide::Upper,
        seed,
    })
}

/// The identity's roundness `|B(0,1)| / 2^{2n+2}`.
pub fn reference_roundness(n: usize) -> f64 {
    koranyi_ball_volume(n, 1.0) / 2f64.powi(2 * n as i32 + 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RoundnessVerdict {
    /// Running minimum stays above the threshold.
    Round,
    /// Running minimum fell below it.
    Degenerate,
}

/// Roundness of `f(B(at, r))` along a shrinking ladder. The running minimum
/// stands in for the liminf; the verdict is a threshold heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundnessLadder {
    pub center: HPoint,
    pub radii: Vec<f64>,
    pub rows: Vec<RoundnessEstimate>,
    pub running_min: Vec<f64>,
    pub liminf: f64,
    pub reference: f64,
    pub threshold: f64,
    pub verdict: RoundnessVerdict,
    pub heuristic: bool,
}

/// Each row measures the blow-up of `f` at `at` and scale `r` on the unit
/// ball; the ratio is invariant under the rescaling.
pub fn roundness_ladder(
    f: &MapDescriptor,
    at: &HPoint,
    radii: &[f64],
    threshold_factor: f64,
    opts: &RoundnessOptions,
    seed: u64,
) -> Result<RoundnessLadder> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("radii", "radius ladder must be non-empty and strictly decreasing"));
    }
    let n = at.dim();
    let unit = Ball::centered(n, 1.0, MetricKind::Koranyi)?;
    let rows: Vec<RoundnessEstimate> = radii
        .par_iter()
        .enumerate()
        .map(|(k, &r)| roundness_ratio(&f.blow_up(at, r)?, &unit, opts, derive_seed(seed, &[k as u64])))
        .collect::<Result<_>>()?;
    let running_min: Vec<f64> = rows
        .iter()
        .scan(f64::INFINITY, |m, row| {
            *m = m.min(row.ratio);
            Some(*m)
        })
        .collect();
    let liminf = running_min[running_min.len() - 1];
    let reference = reference_roundness(n);
    let threshold = threshold_factor * reference;
    Ok(RoundnessLadder {
        center: at.clone(),
        radii: radii.to_vec(),
        rows,
        running_min,
        liminf,
        reference,
        threshold,
        verdict: if liminf >= threshold {
            RoundnessVerdict::Round
        } else {
            RoundnessVerdict::Degenerate
        },
        heuristic: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NecessityBudget {
    pub lambda: LambdaOptions,
    /// Points drawn in each of `E_1`, `E_2`; every pair is checked.
    pub pair_samples: usize,
    pub sets: SetBudget,
    pub roundness: RoundnessOptions,
}

impl Default for NecessityBudget {
    fn default() -> Self {
        Self {
            lambda: LambdaOptions::default(),
            pair_samples: 100,
            sets: SetBudget::default(),
            roundness: RoundnessOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseCheck {
    pub pairs: usize,
    pub min_distance: f64,
    /// `(13/16) r lambda_max`.
    pub bound: f64,
    pub holds: bool,
    pub witness: (HPoint, HPoint),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecessityConstruction {
    pub r: f64,
    pub lambda_max: LambdaMax,
    /// `delta_{15r/16}(v)` for the maximizing direction `v`.
    pub x: HPoint,
    pub e1: Ball,
    pub e2: Ball,
    pub pairwise: PairwiseCheck,
    /// `dist(L(E_1), L(E_2))`, from above.
    pub distance: SetEstimate,
    /// `diam L(B(0, r))`, from below.
    pub diameter: SetEstimate,
    /// `(3/4) r lambda_max`.
    pub distance_bound: f64,
    /// Both sampling biases favour the inequalities, so only round-off is
    /// allowed for.
    pub tolerance: f64,
    pub distance_holds: bool,
    /// `dist >= (3/8) diam - tolerance`.
    pub diameter_holds: bool,
    pub roundness: RoundnessEstimate,
}

impl NecessityConstruction {
    pub fn holds(&self) -> bool {
        self.pairwise.holds && self.distance_holds && self.diameter_holds
    }
}

pub fn necessity_construction(l: &ValidatedHom, r: f64, budget: &NecessityBudget, seed: u64) -> Result<NecessityConstruction> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("radius must be positive, got {r}")));
    }
    let n = l.dim();
    let f = MapDescriptor::homomorphism(l);
    let metric = budget.lambda.metric;
    let lambda_max = lambda_max_search(&f, n, &budget.lambda, derive_seed(seed, &[0]))?;
    let lambda = lambda_max.value;
    let x = dilate(15.0 * r / 16.0, &lambda_max.argmax)?;
    let e1 = Ball::new(x.clone(), r / 16.0, metric)?;
    let e2 = Ball::new(HPoint::identity(n), r / 16.0, metric)?;

    let a = ball_sample_interior(&e1, budget.pair_samples, derive_seed(seed, &[1]))?;
    let b = ball_sample_interior(&e2, budget.pair_samples, derive_seed(seed, &[2]))?;
    let la = a.iter().map(|p| f.forward(p)).collect::<Result<Vec<_>>>()?;
    let lb = b.iter().map(|p| f.forward(p)).collect::<Result<Vec<_>>>()?;
    let per_a: Vec<(f64, usize)> = la
        .par_iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for (j, q) in lb.iter().enumerate() {
                let d = distance(metric, p, q)?;
                if d < best.0 {
                    best = (d, j);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut ia = 0;
    for (i, v) in per_a.iter().enumerate() {
        if v.0 < per_a[ia].0 {
            ia = i;
        }
    }
    let bound = 13.0 / 16.0 * r * lambda;
    let pairwise = PairwiseCheck {
        pairs: la.len() * lb.len(),
        min_distance: per_a[ia].0,
        bound,
        holds: per_a[ia].0 >= bound - 1e-9,
        witness: (a[ia].clone(), b[per_a[ia].1].clone()),
    };

    let image = |ball: &Ball| PointSet::ball(ball.clone()).mapped(|p| f.forward(p));
    let distance = set_distance_estimate(&image(&e1)?, &image(&e2)?, metric, &budget.sets, derive_seed(seed, &[3]))?;
    let whole = Ball::new(HPoint::identity(n), r, metric)?;
    let diameter = set_diameter_estimate(&image(&whole)?, metric, &budget.sets, derive_seed(seed, &[4]))?;
    let distance_bound = 0.75 * r * lambda;
    let tolerance = 1e-9 * (1.0 + r * lambda);
    let roundness = roundness_ratio(
        &f,
        &Ball::new(HPoint::identity(n), r, MetricKind::Koranyi)?,
        &budget.roundness,
        derive_seed(seed, &[5]),
    )?;
    Ok(NecessityConstruction {
        r,
        x,
        e1,
        e2,
        pairwise,
        distance_holds: distance.value >= distance_bound - tolerance,
        diameter_holds: distance.value >= 0.375 * diameter.value - tolerance,
        distance,
        diameter,
        distance_bound,
        tolerance,
        lambda_max,
        roundness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::HomogeneousHom;

    fn quick() -> NecessityBudget {
        NecessityBudget {
            lambda: LambdaOptions {
                samples: 500,
                ..Default::default()
            },
            pair_samples: 100,
            sets: SetBudget {
                samples: 300,
                ..Default::default()
            },
            roundness: RoundnessOptions {
                volume_samples: 100_000,
                diameter: SetBudget {
                    samples: 300,
                    ..Default::default()
                },
            },
        }
    }

    fn hom(h: HomogeneousHom) -> ValidatedHom {
        ValidatedHom::new(h).unwrap()
    }

    #[test]
    fn identity_construction() {
        let c = necessity_construction(&hom(HomogeneousHom::identity(1)), 1.0, &quick(), 1).unwrap();
        assert!((c.lambda_max.value - 1.0).abs() < 1e-12);
        assert!(c.pairwise.min_distance >= 13.0 / 16.0 - 1e-6, "{:?}", c.pairwise);
        assert_eq!(c.pairwise.pairs, 10_000);
        assert!(c.holds(), "{c:?}");
        // Triangle-inequality sandwich for the set distance.
        assert!(c.distance.value >= 13.0 / 16.0 - 1e-9 && c.distance.value <= 15.0 / 16.0);
    }

    #[test]
    fn dilation_scales_the_construction() {
        let a = necessity_construction(&hom(HomogeneousHom::identity(1)), 1.0, &quick(), 2).unwrap();
        let b = necessity_construction(&hom(HomogeneousHom::dilation(1, 3.0)), 1.0, &quick(), 2).unwrap();
        assert!((b.lambda_max.value - 3.0).abs() < 1e-12);
        assert!((b.distance_bound - 3.0 * a.distance_bound).abs() < 1e-12);
        assert!(b.holds());
        assert!((b.roundness.ratio - a.roundness.ratio).abs() < 4.0 * (a.roundness.std_error + b.roundness.std_error) + 0.01);
    }

    #[test]
    fn anisotropy_penalizes_roundness() {
        let id = necessity_construction(&hom(HomogeneousHom::identity(1)), 1.0, &quick(), 3).unwrap();
        let la = necessity_construction(&hom(HomogeneousHom::anisotropic(1, 2.0)), 1.0, &quick(), 3).unwrap();
        assert!(la.holds(), "{la:?}");
        assert!(la.roundness.ratio < id.roundness.ratio);
    }

    #[test]
    fn identity_roundness_is_the_reference() {
        let r = roundness_ratio(
            &MapDescriptor::identity(),
            &Ball::centered(1, 1.0, MetricKind::Koranyi).unwrap(),
            &quick().roundness,
            0,
        )
        .unwrap();
        let rho0 = reference_roundness(1);
        assert!((rho0 - std::f64::consts::PI.powi(2) / 32.0).abs() < 1e-15);
        assert!((r.ratio - rho0).abs() / rho0 < 0.03, "{r:?}");
        assert!(r.ratio >= rho0);
    }

    #[test]
    fn stretch_roundness_degenerates_off_axis() {
        let f = MapDescriptor::vertical_stretch(2.0).unwrap();
        let radii = [0.25, 1.0 / 16.0, 1.0 / 64.0];
        let opts = RoundnessOptions {
            volume_samples: 50_000,
            diameter: SetBudget {
                samples: 200,
                ..Default::default()
            },
        };
        let ladder = roundness_ladder(&f, &HPoint::h1(1.0, 0.0, 0.0), &radii, 0.5, &opts, 4).unwrap();
        assert_eq!(ladder.verdict, RoundnessVerdict::Degenerate);
        assert!(ladder.running_min.windows(2).all(|w| w[1] <= w[0]));
        let id = roundness_ladder(&MapDescriptor::identity(), &HPoint::h1(1.0, 0.0, 0.0), &radii, 0.5, &opts, 4).unwrap();
        assert_eq!(id.verdict, RoundnessVerdict::Round);
    }
}
