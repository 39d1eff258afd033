//! Haar-measure Monte Carlo: ball volumes, ball averages and relative
//! densities `mu(E n B) / mu(B)`.
//!
//! Haar measure on `H^n` is Lebesgue measure in coordinates. Every estimator
//! here cuts its sample budget into fixed batches with their own ChaCha
//! streams and merges them in batch order, so the result is a function of
//! `(inputs, seed)` alone.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HqcError, Result};
use crate::fields::ScalarField;
use crate::group::HPoint;
use crate::maps::MapDescriptor;
use crate::metrics::{Ball, BoundSide};
use crate::rng::batched;
use crate::stats::{binomial_std_error, RunningStats};

const MIN_SAMPLES: usize = 1000;

type Oracle = dyn Fn(&HPoint) -> bool + Send + Sync;

#[derive(Clone)]
enum SetShape {
    Ball(Ball),
    Complement(Box<MeasurableSet>),
    Intersection(Vec<MeasurableSet>),
    Union(Vec<MeasurableSet>),
    /// `f(E)`, tested as `f^{-1}(x) in E`.
    Image { set: Box<MeasurableSet>, map: MapDescriptor },
    /// `{coords[coord] > offset}`.
    HalfSpace { coord: usize, offset: f64 },
    Custom { name: String, oracle: Arc<Oracle> },
}

/// A set known through a deterministic membership oracle, with a ball that
/// contains it when one is known.
#[derive(Clone)]
pub struct MeasurableSet {
    shape: SetShape,
    bound: Option<Ball>,
}

impl fmt::Debug for MeasurableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MeasurableSet({})", self.name())
    }
}

impl MeasurableSet {
    pub fn ball(ball: Ball) -> Self {
        Self {
            bound: Some(ball.clone()),
            shape: SetShape::Ball(ball),
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            shape: SetShape::Complement(Box::new(self.clone())),
            bound: None,
        }
    }

    pub fn intersection(sets: Vec<MeasurableSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(invalid("sets", "intersection of nothing"));
        }
        let bound = sets
            .iter()
            .filter_map(|s| s.bound.clone())
            .min_by(|a, b| a.radius().total_cmp(&b.radius()));
        Ok(Self {
            shape: SetShape::Intersection(sets),
            bound,
        })
    }

    /// Union; bounded only when every part is, by a ball around the first
    /// part's center (Koranyi triangle inequality).
    pub fn union(sets: Vec<MeasurableSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(invalid("sets", "union of nothing"));
        }
        let bound = (|| {
            let first = sets[0].bound.clone()?;
            let mut r: f64 = 0.0;
            for s in &sets {
                let b = s.bound.as_ref()?;
                if b.metric() != first.metric() || b.metric() != crate::metrics::MetricKind::Koranyi {
                    return None;
                }
                let d = crate::metrics::koranyi_distance(b.center(), first.center()).ok()?;
                r = r.max(d + b.radius());
            }
            Ball::new(first.center().clone(), r * (1.0 + 1e-12), first.metric()).ok()
        })();
        Ok(Self {
            shape: SetShape::Union(sets),
            bound,
        })
    }

    /// `f(E)`. Needs the inverse evaluator of `f`.
    pub fn image(&self, f: &MapDescriptor) -> Result<Self> {
        if !f.has_inverse() {
            return Err(HqcError::MissingInverse { map: f.name() });
        }
        let bound = self.bound.as_ref().and_then(|b| f.image_bound(b));
        Ok(Self {
            shape: SetShape::Image {
                set: Box::new(self.clone()),
                map: f.clone(),
            },
            bound,
        })
    }

    pub fn half_space(coord: usize, offset: f64) -> Self {
        Self {
            shape: SetShape::HalfSpace { coord, offset },
            bound: None,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        bound: Option<Ball>,
        oracle: impl Fn(&HPoint) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            shape: SetShape::Custom {
                name: name.into(),
                oracle: Arc::new(oracle),
            },
            bound,
        }
    }

    pub fn bound(&self) -> Option<&Ball> {
        self.bound.as_ref()
    }

    pub fn as_ball(&self) -> Option<&Ball> {
        match &self.shape {
            SetShape::Ball(b) => Some(b),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.shape {
            SetShape::Ball(b) => b.to_string(),
            SetShape::Complement(s) => format!("complement({})", s.name()),
            SetShape::Intersection(v) => format!("({})", v.iter().map(|s| s.name()).collect::<Vec<_>>().join(" n ")),
            SetShape::Union(v) => format!("({})", v.iter().map(|s| s.name()).collect::<Vec<_>>().join(" u ")),
            SetShape::Image { set, map } => format!("{}({})", map.name(), set.name()),
            SetShape::HalfSpace { coord, offset } => format!("{{c{coord} > {offset}}}"),
            SetShape::Custom { name, .. } => name.clone(),
        }
    }

    pub fn contains(&self, p: &HPoint) -> Result<bool> {
        match &self.shape {
            SetShape::Ball(b) => b.contains(p),
            SetShape::Complement(s) => Ok(!s.contains(p)?),
            SetShape::Intersection(v) => {
                for s in v {
                    if !s.contains(p)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            SetShape::Union(v) => {
                for s in v {
                    if s.contains(p)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            SetShape::Image { set, map } => {
                if let Some(b) = &self.bound {
                    if !b.contains(p)? {
                        return Ok(false);
                    }
                }
                set.contains(&map.inverse_eval(p)?)
            }
            SetShape::HalfSpace { coord, offset } => {
                let c = p.coords();
                let v = c
                    .get(*coord)
                    .ok_or_else(|| invalid("coord", format!("index {coord} out of range")))?;
                Ok(*v > *offset)
            }
            SetShape::Custom { oracle, .. } => Ok(oracle(p)),
        }
    }
}

/// `mu(E n B) / mu(B)` with its one-sigma error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub hits: usize,
    pub seed: u64,
    /// `mu(S) / mu(B)` when the samples were drawn in a smaller ball `S`
    /// containing `E`; 1 for direct sampling in `B`.
    pub sampling_ratio: f64,
}

impl DensityEstimate {
    fn from_hits(hits: usize, samples: usize, seed: u64, ratio: f64) -> Self {
        let frac = hits as f64 / samples as f64;
        Self {
            value: (ratio * frac).clamp(0.0, 1.0),
            std_error: ratio * binomial_std_error(frac, samples),
            samples,
            hits,
            seed,
            sampling_ratio: ratio,
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub side: BoundSide,
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_SAMPLES {
        return Err(invalid("samples", format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    Ok(())
}

/// Volume of `B` by hit-or-miss in its coordinate bounding box.
pub fn ball_volume_estimate(ball: &Ball, samples: usize, seed: u64) -> Result<MeanEstimate> {
    check_samples(samples)?;
    let (lo, hi) = ball.bounding_box();
    let box_volume: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
    let hits: Vec<Result<usize>> = batched(seed, samples, |rng, k, _| {
        let mut hits = 0;
        let mut c = vec![0.0; lo.len()];
        for _ in 0..k {
            for (i, v) in c.iter_mut().enumerate() {
                *v = rng.random_range(lo[i]..hi[i]);
            }
            if ball.contains(&HPoint::from_coords(&c)?)? {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let hits = hits.into_iter().sum::<Result<usize>>()?;
    let frac = hits as f64 / samples as f64;
    Ok(MeanEstimate {
        value: box_volume * frac,
        std_error: box_volume * binomial_std_error(frac, samples),
        samples,
        seed,
        side: BoundSide::Unbiased,
    })
}

/// Draws a point of `ball` at which `u` is defined; exact singular points
/// have probability zero and are redrawn.
pub(crate) fn draw_regular<R: Rng + ?Sized>(u: &ScalarField, ball: &Ball, rng: &mut R) -> Result<HPoint> {
    loop {
        let p = ball.sample_interior_with(rng)?;
        if !u.is_singular_at(&p) {
            return Ok(p);
        }
    }
}

/// Average of `u` over `B`.
pub fn integrate_over_ball(u: &ScalarField, ball: &Ball, samples: usize, seed: u64) -> Result<MeanEstimate> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    let parts: Vec<Result<RunningStats>> = batched(seed, samples, |rng, k, _| {
        let mut s = RunningStats::default();
        for _ in 0..k {
            s.push(u.eval(&draw_regular(u, ball, rng)?)?);
        }
        Ok(s)
    });
    let mut total = RunningStats::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(MeanEstimate {
        value: total.mean,
        std_error: total.std_error(),
        samples,
        seed,
        side: BoundSide::Unbiased,
    })
}

/// `mu(E n B) / mu(B)`.
///
/// When `E` sits inside a ball `S` of the same metric that is smaller than
/// `B`, the samples are drawn in `S` and the hit fraction is rescaled by
/// `mu(S) / mu(B) = (r_S / r_B)^Q`; this keeps tiny densities resolvable.
pub fn density_in_ball(set: &MeasurableSet, ball: &Ball, samples: usize, seed: u64) -> Result<DensityEstimate> {
    check_samples(samples)?;
    let q = (2 * ball.dim() + 2) as i32;
    let (sampler, ratio) = match set.bound() {
        Some(s) if s.metric() == ball.metric() && s.radius() < ball.radius() => {
            (s.clone(), (s.radius() / ball.radius()).powi(q))
        }
        _ => (ball.clone(), 1.0),
    };
    let direct = ratio == 1.0;
    let hits: Vec<Result<usize>> = batched(seed, samples, |rng, k, _| {
        let mut hits = 0;
        for _ in 0..k {
            let p = sampler.sample_interior_with(rng)?;
            if set.contains(&p)? && (direct || ball.contains(&p)?) {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let hits = hits.into_iter().sum::<Result<usize>>()?;
    Ok(DensityEstimate::from_hits(hits, samples, seed, ratio))
}

/// `mu(f(E) n B) / mu(B)`.
///
/// When `f` has a constant Jacobian `J` and `E` sits in a ball `S` smaller
/// than `B`, the change of variables `mu(f(E) n B) = J mu(E n f^{-1}(B))`
/// lets the samples stay in `S`. Otherwise membership in `f(E)` is tested
/// through the inverse of `f`.
pub fn image_density_in_ball(
    set: &MeasurableSet,
    f: &MapDescriptor,
    ball: &Ball,
    samples: usize,
    seed: u64,
) -> Result<DensityEstimate> {
    let pullback = match (f.jacobian(ball.dim()), set.bound()) {
        (Some(j), Some(s)) if s.metric() == ball.metric() && s.radius() < ball.radius() => Some((j, s.clone())),
        _ => None,
    };
    let Some((jacobian, sampler)) = pullback else {
        return density_in_ball(&set.image(f)?, ball, samples, seed);
    };
    check_samples(samples)?;
    let q = (2 * ball.dim() + 2) as i32;
    let ratio = jacobian * (sampler.radius() / ball.radius()).powi(q);
    let hits: Vec<Result<usize>> = batched(seed, samples, |rng, k, _| {
        let mut hits = 0;
        for _ in 0..k {
            let p = sampler.sample_interior_with(rng)?;
            if set.contains(&p)? && ball.contains(&f.forward(&p)?)? {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let hits = hits.into_iter().sum::<Result<usize>>()?;
    Ok(DensityEstimate::from_hits(hits, samples, seed, ratio))
}

/// `|B_K(0, r)|` in `H^n`: `pi^n / n! * r^{2n+2} * int_{-1}^{1} (1 - t^2)^{n/2} dt`.
pub fn koranyi_ball_volume(n: usize, r: f64) -> f64 {
    // I_m = int (1 - t^2)^{m/2}, I_0 = 2, I_1 = pi / 2, I_m = m / (m + 1) I_{m-2}.
    let mut i = if n % 2 == 0 { 2.0 } else { PI / 2.0 };
    let mut m = if n % 2 == 0 { 2 } else { 3 };
    while m <= n {
        i *= m as f64 / (m + 1) as f64;
        m += 2;
    }
    let horizontal = (1..=n).fold(1.0, |acc, k| acc * PI / k as f64);
    horizontal * i * r.powi(2 * n as i32 + 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldSpec;
    use crate::metrics::MetricKind;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> Ball {
        Ball::centered(n, 1.0, MetricKind::Koranyi).unwrap()
    }

    #[test]
    fn unit_ball_volume_matches_closed_form() {
        // |B_K(0,1)| in H^1 is pi^2 / 2.
        let v = ball_volume_estimate(&unit(1), 400_000, 1).unwrap();
        assert!((v.value - PI * PI / 2.0).abs() < 4.0 * v.std_error, "{v:?}");
    }

    #[test]
    fn closed_form_volumes() {
        assert_relative_eq!(koranyi_ball_volume(1, 1.0), PI * PI / 2.0, epsilon = 1e-14);
        // n = 2: (pi^2 / 2) * (4 / 3).
        assert_relative_eq!(koranyi_ball_volume(2, 1.0), 2.0 * PI * PI / 3.0, epsilon = 1e-14);
        assert_relative_eq!(koranyi_ball_volume(1, 2.0), 8.0 * PI * PI, epsilon = 1e-12);
        let v = ball_volume_estimate(&unit(2), 400_000, 11).unwrap();
        assert!((v.value - koranyi_ball_volume(2, 1.0)).abs() < 4.0 * v.std_error, "{v:?}");
    }

    #[test]
    fn pullback_and_inverse_routes_agree() {
        let e = MeasurableSet::ball(Ball::koranyi(HPoint::h1(1.0, 0.0, 0.0), 0.1).unwrap());
        let f = MapDescriptor::vertical_stretch(2.0).unwrap();
        let b = Ball::koranyi(HPoint::h1(1.0, 0.0, 0.0), 1.0).unwrap();
        let pulled = image_density_in_ball(&e, &f, &b, 50_000, 2).unwrap();
        let direct = density_in_ball(&e.image(&f).unwrap(), &b, 2_000_000, 3).unwrap();
        assert!(pulled.sampling_ratio < 1.0);
        let err = (pulled.std_error.powi(2) + direct.std_error.powi(2)).sqrt();
        assert!((pulled.value - direct.value).abs() < 4.0 * err, "{pulled:?} {direct:?}");
        // Whole image inside: J |E| / |B| = 2 * 0.1^4.
        let big = Ball::koranyi(HPoint::h1(1.0, 0.0, 0.0), 3.0).unwrap();
        let d = image_density_in_ball(&e, &f, &big, 10_000, 4).unwrap();
        assert_relative_eq!(d.value, 2.0 * (0.1f64 / 3.0).powi(4), epsilon = 1e-15);
    }

    #[test]
    fn translated_ball_has_the_same_volume() {
        let a = ball_volume_estimate(&unit(1), 200_000, 2).unwrap();
        let moved = Ball::koranyi(HPoint::h1(2.0, -1.0, 3.0), 1.0).unwrap();
        let b = ball_volume_estimate(&moved, 200_000, 3).unwrap();
        let err = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 4.0 * err);
    }

    #[test]
    fn constants_integrate_exactly() {
        let u = ScalarField::constant(7.0);
        let m = integrate_over_ball(&u, &unit(1), 10_000, 0).unwrap();
        assert_eq!(m.value, 7.0);
    }

    #[test]
    fn odd_function_averages_to_zero() {
        let u = ScalarField::from_spec(&FieldSpec::Coordinate { index: 0 }).unwrap();
        let m = integrate_over_ball(&u, &unit(1), 100_000, 5).unwrap();
        assert!(m.value.abs() < 4.0 * m.std_error);
    }

    #[test]
    fn mean_of_z_squared_matches_closed_form() {
        // Over B_K(0,1) in H^1 the average of |z|^2 is 4 / (3 pi).
        let u = ScalarField::from_spec(&FieldSpec::ZNormSquared).unwrap();
        let m = integrate_over_ball(&u, &unit(1), 200_000, 6).unwrap();
        assert!((m.value - 4.0 / (3.0 * PI)).abs() < 4.0 * m.std_error, "{m:?}");
    }

    #[test]
    fn density_extremes() {
        let b = unit(1);
        let e = MeasurableSet::ball(b.clone());
        assert_eq!(density_in_ball(&e, &b, 5000, 0).unwrap().value, 1.0);
        let far = MeasurableSet::ball(Ball::koranyi(HPoint::h1(10.0, 0.0, 0.0), 1.0).unwrap());
        assert_eq!(density_in_ball(&far, &b, 5000, 0).unwrap().value, 0.0);
    }

    #[test]
    fn nested_ball_density_is_one_sixteenth() {
        let e = MeasurableSet::ball(unit(1));
        let b = Ball::centered(1, 2.0, MetricKind::Koranyi).unwrap();
        let d = density_in_ball(&e, &b, 20_000, 3).unwrap();
        assert_relative_eq!(d.value, 1.0 / 16.0, epsilon = 1e-12);
        let direct = density_in_ball(&e.complement().complement(), &b, 200_000, 3).unwrap();
        assert_eq!(direct.sampling_ratio, 1.0);
        assert!((direct.value - 1.0 / 16.0).abs() < 4.0 * direct.std_error);
    }

    #[test]
    fn complement_densities_sum_to_one() {
        let e = MeasurableSet::half_space(0, 0.3);
        let b = unit(1);
        let d1 = density_in_ball(&e, &b, 50_000, 9).unwrap();
        let d2 = density_in_ball(&e.complement(), &b, 50_000, 9).unwrap();
        assert!((d1.value + d2.value - 1.0).abs() <= 2.0 * d1.std_error + 1e-12);
    }

    #[test]
    fn dilated_ball_fills_the_larger_ball() {
        let e = MeasurableSet::ball(unit(1));
        let b = Ball::centered(1, 2.0, MetricKind::Koranyi).unwrap();
        let f = MapDescriptor::dilation(2.0).unwrap();
        let d = image_density_in_ball(&e, &f, &b, 20_000, 1).unwrap();
        assert!(d.value > 0.999, "{d:?}");
    }

    #[test]
    fn image_under_identity_matches_plain_density() {
        let e = MeasurableSet::half_space(2, 0.1);
        let b = unit(1);
        let a = density_in_ball(&e, &b, 20_000, 4).unwrap();
        let i = image_density_in_ball(&e, &MapDescriptor::identity(), &b, 20_000, 4).unwrap();
        assert_eq!(a, i);
    }

    #[test]
    fn densities_are_invariant_under_translation_of_both() {
        let l = HPoint::h1(1.5, 0.5, -2.0);
        let e = MeasurableSet::ball(Ball::koranyi(HPoint::h1(0.3, 0.0, 0.0), 0.6).unwrap());
        let b = unit(1);
        let f = MapDescriptor::left_translation(l.clone());
        let d0 = density_in_ball(&e, &b, 50_000, 8).unwrap();
        let d1 = image_density_in_ball(&e, &f, &b.translate(&l).unwrap(), 50_000, 8).unwrap();
        let err = (d0.std_error.powi(2) + d1.std_error.powi(2)).sqrt();
        assert!((d0.value - d1.value).abs() <= 4.0 * err + 1e-9);
        // Partly outside: a genuinely random hit count.
        let e = MeasurableSet::ball(Ball::koranyi(HPoint::h1(0.8, 0.0, 0.0), 0.6).unwrap());
        let d0 = density_in_ball(&e, &b, 50_000, 8).unwrap();
        let d1 = image_density_in_ball(&e, &f, &b.translate(&l).unwrap(), 50_000, 8).unwrap();
        let err = (d0.std_error.powi(2) + d1.std_error.powi(2)).sqrt();
        assert!(err > 0.0);
        assert!((d0.value - d1.value).abs() <= 4.0 * err);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(ball_volume_estimate(&unit(1), 10, 0).is_err());
    }
}
