use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::search::{best_index, directions, evaluate, polish, refine, Goal, Probe, Sphere};
use crate::error::{invalid, HqcError, Result};
use crate::group::HPoint;
use crate::maps::MapDescriptor;
use crate::metrics::{distance, BoundSide, MetricKind};
use crate::rng::derive_seed;
use crate::stats::{log_log_fit, LinearFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionOptions {
    /// Random sphere points, on top of the coordinate axes.
    pub samples: usize,
    pub refine_rounds: usize,
    /// Nelder-Mead iterations per restart after the random refinement; 0
    /// skips the polish.
    pub polish_iters: u64,
    pub metric: MetricKind,
}

impl Default for DistortionOptions {
    fn default() -> Self {
        Self {
            samples: 2000,
            refine_rounds: 48,
            polish_iters: 400,
            metric: MetricKind::Koranyi,
        }
    }
}

/// `K_f(x, r)` from sampled sphere points. The sampled sup can only be below
/// the true sup and the sampled inf above the true inf, so `k` is a lower
/// bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionEstimate {
    pub point: HPoint,
    pub radius: f64,
    pub metric: MetricKind,
    pub k: f64,
    pub side: BoundSide,
    pub sup: f64,
    pub sup_witness: HPoint,
    pub sup_evaluations: usize,
    pub inf: f64,
    pub inf_witness: HPoint,
    pub inf_evaluations: usize,
    /// Ratio before local refinement.
    pub sampled_k: f64,
    pub seed: u64,
}

const POLISH_RESTARTS: usize = 4;

fn search<F>(start: Probe, goal: Goal, rounds: usize, iters: u64, seed: u64, objective: &F) -> Result<(Probe, usize)>
where
    F: Fn(&HPoint) -> Result<f64> + Sync,
{
    let (p, a) = refine(start, goal, rounds, seed, objective)?;
    if iters == 0 {
        return Ok((p, a));
    }
    let (p, b) = polish(p, goal, POLISH_RESTARTS, iters, objective)?;
    Ok((p, a + b))
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("radius must be positive, got {r}")));
    }
    Ok(())
}

pub fn distortion(f: &MapDescriptor, x: &HPoint, r: f64, opts: &DistortionOptions, seed: u64) -> Result<DistortionEstimate> {
    check_radius(r)?;
    let fx = f.forward(x)?;
    let sphere = Sphere {
        center: x,
        radius: r,
        metric: opts.metric,
    };
    let objective = |omega: &HPoint| -> Result<f64> { distance(opts.metric, &f.forward(&sphere.point(omega)?)?, &fx) };
    let dirs = directions(x.dim(), opts.samples, derive_seed(seed, &[0]));
    let vals = evaluate(&dirs, &objective)?;
    let (imax, imin) = (best_index(&vals, Goal::Max), best_index(&vals, Goal::Min));
    let sampled_k = vals[imax] / vals[imin];
    let start = |i: usize| Probe {
        omega: dirs[i].clone(),
        value: vals[i],
    };
    let (sup, up) = search(start(imax), Goal::Max, opts.refine_rounds, opts.polish_iters, derive_seed(seed, &[1]), &objective)?;
    let (inf, down) = search(start(imin), Goal::Min, opts.refine_rounds, opts.polish_iters, derive_seed(seed, &[2]), &objective)?;
    let inf_witness = sphere.point(&inf.omega)?;
    if !(inf.value > 0.0) {
        return Err(HqcError::DegenerateImage(format!(
            "f({x}) = f({inf_witness}): map is not injective on the sphere of radius {r}"
        )));
    }
    Ok(DistortionEstimate {
        point: x.clone(),
        radius: r,
        metric: opts.metric,
        k: sup.value / inf.value,
        side: BoundSide::Lower,
        sup: sup.value,
        sup_witness: sphere.point(&sup.omega)?,
        sup_evaluations: dirs.len() + up,
        inf: inf.value,
        inf_witness,
        inf_evaluations: dirs.len() + down,
        sampled_k,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOptions {
    pub distortion: DistortionOptions,
    /// Largest small-radius plateau still called QC-consistent.
    pub plateau_threshold: f64,
    /// Last-decade log-log slope at or below which `K` counts as growing.
    pub growth_slope: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            distortion: DistortionOptions::default(),
            plateau_threshold: 100.0,
            growth_slope: -0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionProfile {
    pub point: HPoint,
    pub rows: Vec<DistortionEstimate>,
    /// Log-log fit of `K` against `r` over the whole ladder.
    pub slope: Option<LinearFit>,
    /// The same over radii within a factor 10 of the smallest.
    pub tail_slope: Option<LinearFit>,
    /// Largest `K` over that last decade.
    pub plateau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QcVerdict {
    QcConsistent,
    NotQcConsistent { point: usize, slope: f64 },
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcProfile {
    pub profiles: Vec<DistortionProfile>,
    /// Max plateau over the points.
    pub plateau: f64,
    pub threshold: f64,
    pub verdict: QcVerdict,
}

/// `K_f(x, r)` over every point and radius; `radii` must decrease.
pub fn qc_profile(
    f: &MapDescriptor,
    points: &[HPoint],
    radii: &[f64],
    opts: &ProfileOptions,
    seed: u64,
) -> Result<QcProfile> {
    if points.is_empty() || radii.is_empty() {
        return Err(invalid("profile", "need at least one point and one radius"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("radii", "radius ladder must be strictly decreasing"));
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..radii.len()).map(move |k| (i, k)))
        .collect();
    let rows: Vec<DistortionEstimate> = jobs
        .par_iter()
        .map(|&(i, k)| distortion(f, &points[i], radii[k], &opts.distortion, derive_seed(seed, &[i as u64, k as u64])))
        .collect::<Result<_>>()?;

    let r_min = radii[radii.len() - 1];
    let profiles: Vec<DistortionProfile> = rows
        .chunks(radii.len())
        .zip(points)
        .map(|(rows, p)| {
            let ks: Vec<f64> = rows.iter().map(|e| e.k).collect();
            let tail = radii.iter().filter(|r| **r <= 10.0 * r_min).count();
            let from = radii.len() - tail;
            DistortionProfile {
                point: p.clone(),
                slope: log_log_fit(radii, &ks),
                tail_slope: log_log_fit(&radii[from..], &ks[from..]),
                plateau: ks[from..].iter().cloned().fold(1.0, f64::max),
                rows: rows.to_vec(),
            }
        })
        .collect();

    let plateau = profiles.iter().map(|p| p.plateau).fold(1.0, f64::max);
    let growing = profiles.iter().enumerate().find_map(|(i, p)| {
        p.tail_slope
            .filter(|fit| fit.slope <= opts.growth_slope)
            .map(|fit| (i, fit.slope))
    });
    let verdict = match growing {
        Some((point, slope)) => QcVerdict::NotQcConsistent { point, slope },
        None if plateau <= opts.plateau_threshold => QcVerdict::QcConsistent,
        None => QcVerdict::Inconclusive,
    };
    Ok(QcProfile {
        profiles,
        plateau,
        threshold: opts.plateau_threshold,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaOptions {
    pub samples: usize,
    pub refine_rounds: usize,
    /// Nelder-Mead iterations per restart after the random refinement; 0
    /// skips the polish.
    pub polish_iters: u64,
    pub metric: MetricKind,
}

impl Default for LambdaOptions {
    fn default() -> Self {
        Self {
            samples: 4000,
            refine_rounds: 48,
            polish_iters: 400,
            metric: MetricKind::Koranyi,
        }
    }
}

/// `max_{|v| = 1} d(f(v), f(0))`, from below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaMax {
    pub value: f64,
    /// Maximizer on the unit sphere.
    pub argmax: HPoint,
    /// Best sampled value before refinement.
    pub sampled: f64,
    pub evaluations: usize,
    pub side: BoundSide,
    pub metric: MetricKind,
    pub seed: u64,
}

pub fn lambda_max_search(f: &MapDescriptor, n: usize, opts: &LambdaOptions, seed: u64) -> Result<LambdaMax> {
    if n == 0 {
        return Err(HqcError::ZeroDimension);
    }
    let origin = HPoint::identity(n);
    let f0 = f.forward(&origin)?;
    let sphere = Sphere {
        center: &origin,
        radius: 1.0,
        metric: opts.metric,
    };
    let objective = |omega: &HPoint| -> Result<f64> { distance(opts.metric, &f.forward(&sphere.point(omega)?)?, &f0) };
    let dirs = directions(n, opts.samples, derive_seed(seed, &[0]));
    let vals = evaluate(&dirs, &objective)?;
    let i = best_index(&vals, Goal::Max);
    let start = Probe {
        omega: dirs[i].clone(),
        value: vals[i],
    };
    let (best, spent) = search(start, Goal::Max, opts.refine_rounds, opts.polish_iters, derive_seed(seed, &[1]), &objective)?;
    Ok(LambdaMax {
        value: best.value,
        argmax: sphere.point(&best.omega)?,
        sampled: vals[i],
        evaluations: dirs.len() + spent,
        side: BoundSide::Lower,
        metric: opts.metric,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::ValidatedHom;
    use crate::group::HomogeneousHom;

    fn quick() -> DistortionOptions {
        DistortionOptions {
            samples: 400,
            ..Default::default()
        }
    }

    #[test]
    fn isometries_have_unit_distortion() {
        let maps = [
            MapDescriptor::left_translation(HPoint::h1(1.0, -2.0, 0.5)),
            MapDescriptor::rotation(0.9).unwrap(),
            MapDescriptor::conjugation(),
            MapDescriptor::dilation(3.0).unwrap(),
        ];
        for f in &maps {
            for (x, r) in [(HPoint::h1(0.0, 0.0, 0.0), 1.0), (HPoint::h1(0.4, 1.0, -2.0), 0.01)] {
                let d = distortion(f, &x, r, &quick(), 3).unwrap();
                assert!(d.k >= 1.0 && d.k - 1.0 < 1e-6, "{f:?} {d:?}");
            }
        }
    }

    #[test]
    fn anisotropic_distortion_is_four_at_every_scale() {
        // L_2 stretches x by 2 and shrinks y by 2: sup 2r, inf r/2.
        let f = MapDescriptor::anisotropic(2.0).unwrap();
        for r in [4.0, 1.0, 0.01] {
            let d = distortion(&f, &HPoint::h1(0.5, 0.5, 1.0), r, &quick(), 4).unwrap();
            assert!((d.k - 4.0).abs() < 1e-6, "{d:?}");
        }
    }

    #[test]
    fn refinement_never_lowers_k() {
        let f = MapDescriptor::vertical_stretch(2.0).unwrap();
        let d = distortion(&f, &HPoint::h1(1.0, 0.0, 0.0), 0.05, &quick(), 5).unwrap();
        assert!(d.k >= d.sampled_k);
        assert!(d.sup >= d.inf);
    }

    #[test]
    fn stretch_distortion_follows_the_three_halves_law() {
        // At x = ((1,0),0) the increment of (z, t) -> (z, 2t) is
        // (h_z, 2h_t - 2h_y): the sup over the r-sphere is ~ sqrt(2r) (pure
        // h_y) and the inf ~ r^2 (h_y = h_t with |h_z| ~ r^2).
        let f = MapDescriptor::vertical_stretch(2.0).unwrap();
        let radii: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
        let ks: Vec<f64> = radii
            .iter()
            .map(|&r| distortion(&f, &HPoint::h1(1.0, 0.0, 0.0), r, &quick(), 6).unwrap().k)
            .collect();
        let fit = log_log_fit(&radii, &ks).unwrap();
        assert!((fit.slope + 1.5).abs() < 0.05, "{fit:?}");
        let r = radii[radii.len() - 1];
        let lead = ks[ks.len() - 1] * r.powf(1.5);
        assert!((lead - 2f64.sqrt()).abs() < 0.05, "{lead}");
    }

    #[test]
    fn constant_map_is_a_collision() {
        let f = MapDescriptor::custom(crate::maps::CustomMap {
            name: "squash".into(),
            forward: Box::new(|p| HPoint::identity(p.dim())),
            inverse: None,
            group_compatible: false,
            expected_qc: Some(false),
        });
        let e = distortion(&f, &HPoint::identity(1), 1.0, &quick(), 0).unwrap_err();
        assert!(matches!(e, HqcError::DegenerateImage(_)));
    }

    #[test]
    fn profile_verdicts() {
        let radii: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
        let points = [HPoint::h1(1.0, 0.0, 0.0), HPoint::h1(0.0, -0.5, 0.3)];
        let iso = MapDescriptor::compose(vec![
            MapDescriptor::rotation(0.3).unwrap(),
            MapDescriptor::left_translation(HPoint::h1(0.0, 1.0, 1.0)),
        ]);
        let opts = ProfileOptions {
            distortion: quick(),
            ..Default::default()
        };
        let p = qc_profile(&iso, &points, &radii, &opts, 1).unwrap();
        assert_eq!(p.verdict, QcVerdict::QcConsistent);
        assert!(p.plateau - 1.0 < 1e-6);

        let stretch = MapDescriptor::vertical_stretch(2.0).unwrap();
        let p = qc_profile(&stretch, &points, &radii, &opts, 1).unwrap();
        assert!(matches!(p.verdict, QcVerdict::NotQcConsistent { point: 0, .. }), "{:?}", p.verdict);
    }

    #[test]
    fn unordered_ladder_is_rejected() {
        let f = MapDescriptor::identity();
        assert!(qc_profile(&f, &[HPoint::identity(1)], &[0.1, 0.2], &ProfileOptions::default(), 0).is_err());
    }

    #[test]
    fn lambda_max_examples() {
        let opts = LambdaOptions {
            samples: 500,
            ..Default::default()
        };
        let id = lambda_max_search(&MapDescriptor::identity(), 1, &opts, 0).unwrap();
        assert!((id.value - 1.0).abs() < 1e-12);
        let d = lambda_max_search(&MapDescriptor::dilation(3.0).unwrap(), 2, &opts, 0).unwrap();
        assert!((d.value - 3.0).abs() < 1e-12);
        let a = lambda_max_search(&MapDescriptor::anisotropic(2.0).unwrap(), 1, &opts, 0).unwrap();
        assert!(a.value >= 2.0 && a.value - 2.0 < 1e-9, "{a:?}");
    }

    #[test]
    fn lambda_max_of_a_homomorphism_is_the_top_singular_value() {
        // For n = 1 the max of |L v| over the unit sphere is max(s_1, sqrt|mu|)
        // and |mu| = |det A| <= s_1^2.
        let h = HomogeneousHom::from_rows(&[vec![1.5, 0.7], vec![-0.2, 0.9]], 1.5 * 0.9 + 0.7 * 0.2).unwrap();
        let v = ValidatedHom::new(h.clone()).unwrap();
        let top = h.matrix().clone().svd(false, false).singular_values.max();
        let est = lambda_max_search(&MapDescriptor::homomorphism(&v), 1, &LambdaOptions::default(), 9).unwrap();
        assert!(est.value <= top * (1.0 + 1e-12));
        assert!((est.value - top).abs() < 1e-8 * top, "{} vs {top}", est.value);
        assert!(est.value >= est.sampled);
    }
}
