use rand::Rng;

use super::{koranyi_norm, norm, Ball, MetricKind};
use crate::error::{invalid, HqcError, Result};
use crate::group::{dilate_unchecked, HPoint};
use crate::rng::batched;

const MAX_REJECTIONS: usize = 1_000_000;

/// A point on the Koranyi unit sphere: Gaussian direction in all `2n+1`
/// coordinates, pushed radially (by dilation) onto the sphere.
pub fn unit_sphere_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HPoint {
    loop {
        let g = HPoint::random_gaussian(n, 1.0, rng);
        let k = koranyi_norm(&g);
        if k > 1e-12 {
            return dilate_unchecked(1.0 / k, &g);
        }
    }
}

/// The `2(2n+1)` signed coordinate directions, all on the unit sphere.
pub(crate) fn axis_directions(n: usize) -> Vec<HPoint> {
    let mut dirs = Vec::with_capacity(2 * (2 * n + 1));
    for i in 0..=2 * n {
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; 2 * n + 1];
            c[i] = sign;
            dirs.push(HPoint::from_coords(&c).expect("finite"));
        }
    }
    dirs
}

/// Uniform point of the unit ball centered at the identity, by rejection
/// from the box `[-1, 1]^{2n+1}`. CC balls use the Koranyi ball as the
/// proposal since `d_K <= d_cc`.
pub(crate) fn unit_ball_point<R: Rng + ?Sized>(
    n: usize,
    metric: MetricKind,
    rng: &mut R,
) -> Result<HPoint> {
    for _ in 0..MAX_REJECTIONS {
        let coords: Vec<f64> = (0..2 * n + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = HPoint::from_coords(&coords)?;
        if koranyi_norm(&p) >= 1.0 {
            continue;
        }
        if metric == MetricKind::Cc && norm(MetricKind::Cc, &p)? >= 1.0 {
            continue;
        }
        return Ok(p);
    }
    Err(HqcError::EmptySample {
        what: format!("unit {metric} ball"),
        attempts: MAX_REJECTIONS,
    })
}

/// `count` points on the sphere `d(center, x) = r`.
///
/// Koranyi points are exact radial projections. CC points take a Koranyi
/// direction `omega` and dilate it by `r / d_cc(0, omega)`, which is exact up
/// to optimizer tolerance because `d_cc` is homogeneous.
pub fn sphere_sample(
    center: &HPoint,
    r: f64,
    metric: MetricKind,
    count: usize,
    seed: u64,
) -> Result<Vec<HPoint>> {
    let ball = Ball::new(center.clone(), r, metric)
        .map_err(|_| invalid("r", format!("sphere radius must be positive, got {r}")))?;
    let chunks = batched(seed, count, |rng, k, _| {
        (0..k)
            .map(|_| ball.sample_boundary_with(rng))
            .collect::<Result<Vec<_>>>()
    });
    flatten(chunks)
}

/// `count` Haar-uniform points strictly inside `ball`.
pub fn ball_sample_interior(ball: &Ball, count: usize, seed: u64) -> Result<Vec<HPoint>> {
    let chunks = batched(seed, count, |rng, k, _| {
        (0..k)
            .map(|_| ball.sample_interior_with(rng))
            .collect::<Result<Vec<_>>>()
    });
    flatten(chunks)
}

fn flatten(chunks: Vec<Result<Vec<HPoint>>>) -> Result<Vec<HPoint>> {
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::dilate;
    use crate::metrics::koranyi_distance;
    use crate::stats::RunningStats;
    use approx::assert_relative_eq;

    #[test]
    fn koranyi_sphere_points_sit_on_the_sphere() {
        let c = HPoint::h1(0.7, -1.1, 0.4);
        for r in [1e-3, 0.25, 1.0, 7.5] {
            for p in sphere_sample(&c, r, MetricKind::Koranyi, 2000, 5).unwrap() {
                let d = koranyi_distance(&c, &p).unwrap();
                assert!((d - r).abs() / r <= 1e-9, "r={r} d={d}");
            }
        }
    }

    #[test]
    fn dilated_unit_sphere_is_sphere_of_radius_r() {
        let unit = sphere_sample(&HPoint::identity(2), 1.0, MetricKind::Koranyi, 500, 9).unwrap();
        let big = sphere_sample(&HPoint::identity(2), 3.0, MetricKind::Koranyi, 500, 9).unwrap();
        for (u, b) in unit.iter().zip(&big) {
            let du = dilate(3.0, u).unwrap();
            for (x, y) in du.coords().iter().zip(b.coords()) {
                assert_relative_eq!(*x, y, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_extremes_scale_linearly() {
        let extremes = |r: f64| {
            let pts = sphere_sample(&HPoint::identity(1), r, MetricKind::Koranyi, 200, 21).unwrap();
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let d = koranyi_distance(&pts[i], &pts[j]).unwrap();
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            (lo, hi)
        };
        let (lo1, hi1) = extremes(1.0);
        let (lo5, hi5) = extremes(5.0);
        assert_relative_eq!(lo5 / lo1, 5.0, max_relative = 1e-9);
        assert_relative_eq!(hi5 / hi1, 5.0, max_relative = 1e-9);
    }

    #[test]
    fn interior_samples_are_inside_and_centered() {
        let ball = Ball::centered(1, 2.0, MetricKind::Koranyi).unwrap();
        let pts = ball_sample_interior(&ball, 40_000, 13).unwrap();
        assert_eq!(pts.len(), 40_000);
        let mut sx = RunningStats::default();
        let mut sy = RunningStats::default();
        for p in &pts {
            assert!(ball.contains(p).unwrap());
            sx.push(p.z()[0].re);
            sy.push(p.z()[0].im);
        }
        assert!(sx.mean.abs() < 4.0 * sx.std_error());
        assert!(sy.mean.abs() < 4.0 * sy.std_error());
    }

    #[test]
    fn rescaled_unit_ball_matches_ball_of_radius_r_in_distribution() {
        // Two-sample comparison of the radial profile |x|_K / r via binned
        // counts; a chi-square statistic with 9 dof should stay below 30.
        let unit = ball_sample_interior(&Ball::centered(1, 1.0, MetricKind::Koranyi).unwrap(), 20_000, 1).unwrap();
        let big = ball_sample_interior(&Ball::centered(1, 4.0, MetricKind::Koranyi).unwrap(), 20_000, 2).unwrap();
        let bins = |pts: &[HPoint], r: f64| {
            let mut h = [0f64; 10];
            for p in pts {
                let k = ((koranyi_norm(p) / r) * 10.0).floor().min(9.0) as usize;
                h[k] += 1.0;
            }
            h
        };
        let a = bins(&unit, 1.0);
        let b = bins(&big, 4.0);
        let chi2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2) / (x + y)).sum();
        assert!(chi2 < 30.0, "chi2 = {chi2}");
    }

    #[test]
    fn box_acceptance_is_stable_across_seeds() {
        let rate = |seed: u64| {
            let mut rng = crate::rng::stream_rng(seed, 0);
            let mut hits = 0;
            for _ in 0..100_000 {
                let coords: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                if koranyi_norm(&HPoint::from_coords(&coords).unwrap()) < 1.0 {
                    hits += 1;
                }
            }
            hits as f64 / 100_000.0
        };
        let base = rate(0);
        assert!(base > 0.3);
        for s in 1..4 {
            assert!((rate(s) - base).abs() / base < 0.02);
        }
    }
}
