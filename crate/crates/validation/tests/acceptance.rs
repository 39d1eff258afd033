//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Tolerances and budgets are pinned
//! below; every run uses fixed seeds.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use hqc_core::bmo::{bmo_norm_estimate, jn_tail_fit, BallFamily, BmoOptions, BmoVerdict, FamilySpec, JnOptions};
use hqc_core::fields::{FieldSpec, ScalarField};
use hqc_core::measure::ball_volume_estimate;
use hqc_core::metrics::{cc_distance_estimate, CcOptions};
use hqc_core::pansu::{pansu_differential_estimate, PansuOptions, PansuVerdict};
use hqc_core::qc::{
    bmo_transfer_experiment, distortion, gotoh_check, necessity_construction, qc_profile, reference_roundness,
    roundness_ratio, DistortionOptions, GotohOptions, LambdaOptions, NecessityBudget, ProfileOptions,
    RoundnessOptions,
};
use hqc_core::measure::MeasurableSet;
use hqc_core::metrics::SetBudget;
use hqc_core::rng::{derive_seed, stream_rng};
use hqc_core::*;
use rand::Rng;

const SEED: u64 = 20_240_611;

// Pinned tolerances.
const GROUP_TOL: f64 = 1e-9;
const GROUP_TRIPLES: usize = 100_000;
const GROUP_TIME: Duration = Duration::from_secs(5);
const METRIC_TOL: f64 = 1e-12;
const METRIC_INSTANCES: usize = 10_000;
const CC_HORIZONTAL_TOL: f64 = 0.005;
const CC_VERTICAL_TOL: f64 = 0.01;
const CC_TIME: Duration = Duration::from_secs(60);
const VOLUME_SAMPLES: usize = 1_000_000;
const SIGMAS: f64 = 4.0;
const PANSU_MATCH_TOL: f64 = 1e-6;
const PANSU_SLOPE_MIN: f64 = 0.9;
const STRETCH_EXPONENT: (f64, f64) = (-0.5, 0.1);
const ISOMETRY_K_TOL: f64 = 1e-6;
const STRETCH_SLOPE: (f64, f64) = (-0.5, 0.1);
const JN_BALLS: usize = 10;
const JN_MIN_R2: f64 = 0.9;
const TRANSFER_BAND: (f64, f64) = (0.8, 1.25);
const TRANSFER_TIME: Duration = Duration::from_secs(600);
const NECESSITY_HOMS: usize = 100;
const NECESSITY_COND: f64 = 8.0;
const NECESSITY_ROUNDOFF: f64 = 1e-9;
const GOTOH_PAIRS: usize = 20;
const ROUNDNESS_TOL: f64 = 0.03;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn size(p: &HPoint) -> f64 {
    p.coords().iter().map(|c| c.abs()).fold(1.0, f64::max)
}

fn max_diff(a: &HPoint, b: &HPoint) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c01_group_axioms() -> Outcome {
    let start = Instant::now();
    let (mut assoc, mut ident, mut inv) = (0.0f64, 0.0f64, 0.0f64);
    for n in [1usize, 2] {
        let mut rng = stream_rng(derive_seed(SEED, &[1, n as u64]), 0);
        for _ in 0..GROUP_TRIPLES {
            let p = HPoint::random_gaussian(n, 3.0, &mut rng);
            let q = HPoint::random_gaussian(n, 3.0, &mut rng);
            let r = HPoint::random_gaussian(n, 3.0, &mut rng);
            // t picks up products of horizontal parts, so residuals scale
            // with size^2.
            let s = size(&p).max(size(&q)).max(size(&r)).powi(2);
            let lhs = multiply(&multiply(&p, &q).unwrap(), &r).unwrap();
            let rhs = multiply(&p, &multiply(&q, &r).unwrap()).unwrap();
            assoc = assoc.max(max_diff(&lhs, &rhs) / s);
            let e = HPoint::identity(n);
            ident = ident
                .max(max_diff(&multiply(&e, &p).unwrap(), &p) / s)
                .max(max_diff(&multiply(&p, &e).unwrap(), &p) / s);
            inv = inv
                .max(max_diff(&multiply(&p, &inverse(&p)).unwrap(), &e) / s)
                .max(max_diff(&multiply(&inverse(&p), &p).unwrap(), &e) / s);
        }
    }
    let secs = start.elapsed();
    let worst = assoc.max(ident).max(inv);
    outcome(
        worst <= GROUP_TOL && secs < GROUP_TIME,
        format!(
            "{GROUP_TRIPLES} triples in each of H^1, H^2: assoc {assoc:.1e}, identity {ident:.1e}, inverse {inv:.1e} (tol {GROUP_TOL:e}); {:.2} s (limit {} s)",
            secs.as_secs_f64(),
            GROUP_TIME.as_secs()
        ),
    )
}

fn c02_metric_invariances() -> Outcome {
    let mut rng = stream_rng(derive_seed(SEED, &[2]), 0);
    let (mut left, mut homog) = (0.0f64, 0.0f64);
    for i in 0..METRIC_INSTANCES {
        let n = 1 + i % 2;
        let p = HPoint::random_gaussian(n, 1.0, &mut rng);
        let q = HPoint::random_gaussian(n, 1.0, &mut rng);
        let l = HPoint::random_gaussian(n, 1.0, &mut rng);
        let delta = 2f64.powf(rng.random_range(-4.0..4.0));
        let d = koranyi_distance(&p, &q).unwrap();
        let dl = koranyi_distance(&left_translate(&l, &p).unwrap(), &left_translate(&l, &q).unwrap()).unwrap();
        let dd = koranyi_distance(&dilate(delta, &p).unwrap(), &dilate(delta, &q).unwrap()).unwrap();
        left = left.max((dl - d).abs() / d);
        homog = homog.max((dd - delta * d).abs() / (delta * d));
    }
    outcome(
        left <= METRIC_TOL && homog <= METRIC_TOL,
        format!(
            "{METRIC_INSTANCES} instances: relative left-invariance error {left:.1e}, dilation error {homog:.1e} (tol {METRIC_TOL:e})"
        ),
    )
}

fn c03_cc_optimizer() -> Outcome {
    let o = HPoint::identity(1);
    let opts = CcOptions::default();
    let timed = |q: HPoint| {
        let start = Instant::now();
        let e = cc_distance_estimate(&o, &q, &opts).unwrap();
        (e.distance, start.elapsed())
    };
    let (dh, th) = timed(HPoint::h1(1.0, 0.0, 0.0));
    let (dv, tv) = timed(HPoint::h1(0.0, 0.0, 1.0));
    let eh = (dh - 1.0).abs();
    let ev = (dv / PI.sqrt() - 1.0).abs();
    outcome(
        eh <= CC_HORIZONTAL_TOL && ev <= CC_VERTICAL_TOL && th < CC_TIME && tv < CC_TIME,
        format!(
            "d_cc(0,(1,0,0)) = {dh:.6} (err {:.3}% <= 0.5%), d_cc(0,(0,0,1)) = {dv:.6} vs sqrt(pi) (err {:.3}% <= 1%); {:.2} s, {:.2} s (limit 60 s each)",
            100.0 * eh,
            100.0 * ev,
            th.as_secs_f64(),
            tv.as_secs_f64()
        ),
    )
}

fn c04_measure_scaling() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [1usize, 2] {
        let b1 = Ball::centered(n, 1.0, MetricKind::Koranyi).unwrap();
        let b2 = Ball::centered(n, 2.0, MetricKind::Koranyi).unwrap();
        let v1 = ball_volume_estimate(&b1, VOLUME_SAMPLES, derive_seed(SEED, &[4, n as u64, 1])).unwrap();
        let v2 = ball_volume_estimate(&b2, VOLUME_SAMPLES, derive_seed(SEED, &[4, n as u64, 2])).unwrap();
        let ratio = v2.value / v1.value;
        let err = ratio * (v1.std_error / v1.value).hypot(v2.std_error / v2.value);
        let want = 2f64.powi(2 * n as i32 + 2);
        let ok = (ratio - want).abs() <= SIGMAS * err;
        pass &= ok;
        parts.push(format!("n={n}: {ratio:.3} vs {want} (+-{:.3} at 4 sigma)", SIGMAS * err));
    }
    outcome(pass, format!("{VOLUME_SAMPLES} samples per ball; {}", parts.join(", ")))
}

fn c05_pansu() -> Outcome {
    let opts = PansuOptions::default();
    let points = [HPoint::h1(0.0, 0.0, 0.0), HPoint::h1(0.4, -0.2, 1.1), HPoint::h1(1.0, 0.0, 0.0)];
    let maps = [
        MapDescriptor::dilation(3.0).unwrap(),
        MapDescriptor::dilation(0.5).unwrap(),
        MapDescriptor::left_translation(HPoint::h1(2.0, 1.0, -3.0)),
        MapDescriptor::left_translation(HPoint::h1(-0.5, 0.7, 0.2)),
    ];
    let (mut worst, mut exact, mut sloped, mut ok) = (0.0f64, 0, 0, true);
    for f in &maps {
        for p in &points {
            let est = pansu_differential_estimate(f, p, &opts).unwrap();
            let known = f.known_differential(p).unwrap();
            let err = (est.differential.matrix() - known.matrix()).amax().max((est.differential.mu() - known.mu()).abs());
            worst = worst.max(err);
            // Residuals of a group-compatible map sit at round-off, so the
            // slope condition only applies when a slope was fitted.
            match (&est.verdict, &est.convergence) {
                (PansuVerdict::ExactToRoundoff, _) => exact += 1,
                (PansuVerdict::Differentiable, Some(fit)) if fit.slope >= PANSU_SLOPE_MIN => sloped += 1,
                _ => ok = false,
            }
        }
    }
    ok &= worst <= PANSU_MATCH_TOL;

    let stretch = MapDescriptor::vertical_stretch(2.0).unwrap();
    let est = pansu_differential_estimate(&stretch, &HPoint::h1(1.0, 0.0, 0.0), &opts).unwrap();
    let growth = match est.verdict {
        PansuVerdict::NotDifferentiable { growth_exponent } => Some(growth_exponent),
        _ => None,
    };
    let growth_ok = growth.is_some_and(|g| (g - STRETCH_EXPONENT.0).abs() <= STRETCH_EXPONENT.1);
    outcome(
        ok && growth_ok,
        format!(
            "{} dilation/translation cases: max |L - known| {worst:.1e} (tol {PANSU_MATCH_TOL:e}), {exact} exact to round-off, {sloped} with slope >= {PANSU_SLOPE_MIN}; stretch at (1,0,0) growth exponent {} (want -0.5 +- 0.1)",
            maps.len() * points.len(),
            growth.map_or("none".into(), |g| format!("{g:.3}"))
        ),
    )
}

fn c06_distortion() -> Outcome {
    let isometries = [
        MapDescriptor::identity(),
        MapDescriptor::left_translation(HPoint::h1(2.0, 1.0, -3.0)),
        MapDescriptor::rotation(0.7).unwrap(),
        MapDescriptor::conjugation(),
    ];
    let points = [
        HPoint::h1(0.0, 0.0, 0.0),
        HPoint::h1(1.0, 0.0, 0.0),
        HPoint::h1(-0.3, 0.8, 0.5),
        HPoint::h1(2.0, -1.0, -4.0),
    ];
    let radii = [1.0, 0.1, 1e-3];
    let opts = DistortionOptions::default();
    let mut worst = 0.0f64;
    for (i, f) in isometries.iter().enumerate() {
        for (j, x) in points.iter().enumerate() {
            for (k, &r) in radii.iter().enumerate() {
                let e = distortion(f, x, r, &opts, derive_seed(SEED, &[6, i as u64, j as u64, k as u64])).unwrap();
                worst = worst.max((e.k - 1.0).abs());
            }
        }
    }
    let iso_ok = worst <= ISOMETRY_K_TOL;

    let stretch = MapDescriptor::vertical_stretch(2.0).unwrap();
    let ladder: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
    let prof = qc_profile(&stretch, &[HPoint::h1(1.0, 0.0, 0.0)], &ladder, &ProfileOptions::default(), derive_seed(SEED, &[6, 99])).unwrap();
    let slope = prof.profiles[0].slope.as_ref().map(|f| f.slope);
    let slope_ok = slope.is_some_and(|s| (s - STRETCH_SLOPE.0).abs() <= STRETCH_SLOPE.1);
    outcome(
        iso_ok && slope_ok,
        format!(
            "isometries: {} maps x {} (point, radius) pairs, max |K - 1| = {worst:.1e} (tol {ISOMETRY_K_TOL:e}); vertical stretch slope over r in [2^-8, 2^-2] = {} (want -0.5 +- 0.1; measured law is sqrt(2) r^-1.5)",
            isometries.len(),
            points.len() * radii.len(),
            slope.map_or("none".into(), |s| format!("{s:.3}"))
        ),
    )
}

fn random_balls(count: usize, seed: u64) -> Vec<Ball> {
    let region = Ball::centered(1, 4.0, MetricKind::Koranyi).unwrap();
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let c = region.sample_interior_with(&mut rng).unwrap();
            Ball::koranyi(c, 2f64.powf(rng.random_range(-2.0..=2.0))).unwrap()
        })
        .collect()
}

fn field(spec: FieldSpec) -> ScalarField {
    ScalarField::from_spec(&spec).unwrap()
}

fn c07_bmo() -> Outcome {
    let family = BallFamily::from_spec(&FamilySpec::lattice_default(), 1).unwrap();
    let opts = BmoOptions::default();
    let s = |k: u64| derive_seed(SEED, &[7, k]);

    let constant = bmo_norm_estimate(&ScalarField::constant(3.7), &family, &opts, s(0)).unwrap();
    let const_ok = constant.value == 0.0 && constant.refined == 0.0;

    let bounded = [
        field(FieldSpec::BoundedSinusoid { amplitude: 1.5, frequency: 0.7, phase: 0.2 }),
        field(FieldSpec::IndicatorHalfspace { coord: None, offset: 0.3 }),
        field(FieldSpec::IndicatorHalfspace { coord: Some(0), offset: -1.0 }),
    ];
    let mut bounded_ok = true;
    let mut bounded_parts = Vec::new();
    for (i, u) in bounded.iter().enumerate() {
        let e = bmo_norm_estimate(u, &family, &opts, s(1 + i as u64)).unwrap();
        let cap = 2.0 * u.sup_abs().unwrap() + SIGMAS * e.argmax_std_error;
        bounded_ok &= e.value <= cap && e.refined <= cap;
        bounded_parts.push(format!("{:.3}<={cap:.3}", e.refined));
    }

    let log = ScalarField::log_koranyi();
    let norm = bmo_norm_estimate(&log, &family, &opts, s(10)).unwrap();
    let balls = random_balls(JN_BALLS, s(11));
    let fits: Vec<_> = balls
        .iter()
        .enumerate()
        .map(|(i, b)| jn_tail_fit(&log, b, norm.value, &JnOptions::default(), derive_seed(s(12), &[i as u64])).unwrap())
        .collect();
    // A ball whose deviations never reach the lowest grid point has an empty
    // tail, which passes trivially.
    let trivial = fits.iter().filter(|f| f.trivial).count();
    let jn_ok = fits
        .iter()
        .all(|f| f.trivial || f.a_hat.is_some_and(|a| a > 0.0) && f.r_squared >= JN_MIN_R2);
    let min_a = fits.iter().filter_map(|f| f.a_hat).fold(f64::INFINITY, f64::min);
    let min_r2 = fits.iter().filter(|f| !f.trivial).map(|f| f.r_squared).fold(f64::INFINITY, f64::min);

    let dist = bmo_norm_estimate(&ScalarField::koranyi_distance(), &family, &opts, s(20)).unwrap();
    let (not_bmo, slope) = match dist.verdict {
        BmoVerdict::NotBmo { slope } => (true, slope),
        _ => (false, dist.growth.as_ref().map_or(f64::NAN, |g| g.slope)),
    };
    outcome(
        const_ok && bounded_ok && jn_ok && not_bmo && slope > 0.0,
        format!(
            "constant -> {}; bounded [{}] (<= 2 sup|u| + 4 sigma); log-koranyi JN on {JN_BALLS} balls ({trivial} with empty tail): min A_hat {min_a:.3} > 0, min R^2 {min_r2:.3} (>= {JN_MIN_R2}); koranyi-distance not-BMO {not_bmo}, ladder slope {slope:.3} > 0",
            constant.value,
            bounded_parts.join(", ")
        ),
    )
}

fn c08_transfer() -> Outcome {
    let start = Instant::now();
    let family = BallFamily::from_spec(&FamilySpec::lattice_default(), 1).unwrap();
    let opts = BmoOptions::default();
    let maps = [
        MapDescriptor::identity(),
        MapDescriptor::left_translation(HPoint::h1(1.5, -0.5, 2.0)),
        MapDescriptor::rotation(1.1).unwrap(),
        MapDescriptor::conjugation(),
        MapDescriptor::dilation(2.0).unwrap(),
        MapDescriptor::dilation(0.5).unwrap(),
    ];
    let candidates = [
        FieldSpec::Constant { value: 2.0 },
        FieldSpec::BoundedSinusoid { amplitude: 1.5, frequency: 0.7, phase: 0.2 },
        FieldSpec::IndicatorHalfspace { coord: None, offset: 0.3 },
        FieldSpec::LogKoranyi { center: None },
        FieldSpec::KoranyiDistance { center: None },
        FieldSpec::ZNormSquared,
    ];
    let functions: Vec<ScalarField> = candidates
        .into_iter()
        .map(field)
        .filter(|u| u.expected_bmo() == Some(true))
        .collect();
    let (mut lo, mut hi, mut cells, mut ok) = (f64::INFINITY, 0.0f64, 0, true);
    let mut worst = String::new();
    for (i, f) in maps.iter().enumerate() {
        for (j, u) in functions.iter().enumerate() {
            let t = bmo_transfer_experiment(f, u, &family, &opts, derive_seed(SEED, &[8, i as u64, j as u64])).unwrap();
            cells += 1;
            match t.ratio {
                Some(r) => {
                    if r < lo || r > hi {
                        worst = format!("{} on {}", t.field, t.map);
                    }
                    lo = lo.min(r);
                    hi = hi.max(r);
                    ok &= (TRANSFER_BAND.0..=TRANSFER_BAND.1).contains(&r);
                }
                None => ok = false,
            }
        }
    }
    let secs = start.elapsed();
    outcome(
        ok && secs < TRANSFER_TIME,
        format!(
            "{cells} (map, function) cells, {} functions: ratios in [{lo:.4}, {hi:.4}] (band [{}, {}], extreme at {worst}); {:.1} s (limit 600 s)",
            functions.len(),
            TRANSFER_BAND.0,
            TRANSFER_BAND.1,
            secs.as_secs_f64()
        ),
    )
}

fn random_hom(rng: &mut impl Rng) -> ValidatedHom {
    let a = rng.random_range(1.0..NECESSITY_COND.sqrt());
    let mut h = HomogeneousHom::rotation(1, rng.random_range(0.0..2.0 * PI))
        .compose(&HomogeneousHom::anisotropic(1, a))
        .unwrap()
        .compose(&HomogeneousHom::rotation(1, rng.random_range(0.0..2.0 * PI)))
        .unwrap()
        .compose(&HomogeneousHom::dilation(1, 2f64.powf(rng.random_range(-1.0..1.0))))
        .unwrap();
    if rng.random_bool(0.5) {
        h = h.compose(&HomogeneousHom::conjugation(1)).unwrap();
    }
    ValidatedHom::new(h).unwrap()
}

fn c09_necessity() -> Outcome {
    let budget = NecessityBudget {
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
            volume_samples: 2000,
            diameter: SetBudget {
                samples: 100,
                ..Default::default()
            },
        },
    };
    let mut rng = stream_rng(derive_seed(SEED, &[9]), 0);
    let (mut held, mut max_cond, mut pairs) = (0, 0.0f64, 0);
    // Margins normalized by r lambda_max; each must stay >= 0.
    let (mut m13, mut m34, mut m38) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for i in 0..NECESSITY_HOMS {
        let l = random_hom(&mut rng);
        max_cond = max_cond.max(l.hom().condition_number());
        let r = 2f64.powf(rng.random_range(-2.0..2.0));
        let c = necessity_construction(&l, r, &budget, derive_seed(SEED, &[9, i as u64])).unwrap();
        let scale = r * c.lambda_max.value;
        pairs += c.pairwise.pairs;
        m13 = m13.min((c.pairwise.min_distance - c.pairwise.bound + NECESSITY_ROUNDOFF) / scale);
        m34 = m34.min((c.distance.value - c.distance_bound + c.tolerance) / scale);
        m38 = m38.min((c.distance.value - 3.0 / 8.0 * c.diameter.value + c.tolerance) / scale);
        held += c.holds() as usize;
    }
    let ok = held == NECESSITY_HOMS && max_cond <= NECESSITY_COND && m13 >= 0.0 && m34 >= 0.0 && m38 >= 0.0;
    outcome(
        ok,
        format!(
            "{held}/{NECESSITY_HOMS} homomorphisms (max cond {max_cond:.2} <= 8), {pairs} pairs; min margins / (r lambda_max): 13/16 {m13:.4}, 3/4 {m34:.4}, 3/8 diam {m38:.4}"
        ),
    )
}

fn c10_gotoh_identity() -> Outcome {
    let region = Ball::centered(1, 2.0, MetricKind::Koranyi).unwrap();
    let mut rng = stream_rng(derive_seed(SEED, &[10]), 0);
    let mut ball = || {
        let c = region.sample_interior_with(&mut rng).unwrap();
        MeasurableSet::ball(Ball::koranyi(c, rng.random_range(0.1..0.6)).unwrap())
    };
    let pairs: Vec<(MeasurableSet, MeasurableSet)> = (0..GOTOH_PAIRS).map(|_| (ball(), ball())).collect();
    let family = BallFamily::from_spec(&hqc_cli::run::gotoh_default_family(), 1).unwrap();
    let opts = GotohOptions {
        samples: 5000,
        ..Default::default()
    };
    let check = gotoh_check(&MapDescriptor::identity(), &pairs, &family, &family, &opts, derive_seed(SEED, &[10, 1])).unwrap();
    let worst = check
        .reports
        .iter()
        .map(|r| (r.left.value - r.right.value).abs() / (SIGMAS * r.left.std_error.hypot(r.right.std_error)).max(f64::MIN_POSITIVE))
        .fold(0.0f64, f64::max);
    let agree = check
        .reports
        .iter()
        .all(|r| (r.left.value - r.right.value).abs() <= SIGMAS * r.left.std_error.hypot(r.right.std_error));
    outcome(
        check.satisfied == Some((1.0, 1.0)) && agree,
        format!(
            "{GOTOH_PAIRS} random ball pairs, {} balls: satisfied at {:?}; worst |left - right| = {worst:.2} of the 4 sigma band",
            family.len(),
            check.satisfied
        ),
    )
}

fn c11_roundness() -> Outcome {
    let opts = RoundnessOptions::default();
    let rho0 = reference_roundness(1);
    let mut worst = 0.0f64;
    for (k, r) in [0.25, 1.0, 4.0].into_iter().enumerate() {
        let ball = Ball::centered(1, r, MetricKind::Koranyi).unwrap();
        let e = roundness_ratio(&MapDescriptor::identity(), &ball, &opts, derive_seed(SEED, &[11, k as u64])).unwrap();
        worst = worst.max((e.ratio / rho0 - 1.0).abs());
    }
    let unit = Ball::centered(1, 1.0, MetricKind::Koranyi).unwrap();
    let ratios: Vec<f64> = [2.0, 4.0, 8.0]
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            let f = MapDescriptor::homomorphism(&ValidatedHom::new(HomogeneousHom::anisotropic(1, a)).unwrap());
            roundness_ratio(&f, &unit, &opts, derive_seed(SEED, &[11, 10 + k as u64])).unwrap().ratio
        })
        .collect();
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst <= ROUNDNESS_TOL && decreasing,
        format!(
            "identity over r in {{1/4, 1, 4}}: max deviation from pi^2/32 = {:.2}% (tol 3%); L_a for a = 2, 4, 8: {:.3e}, {:.3e}, {:.3e}",
            100.0 * worst,
            ratios[0],
            ratios[1],
            ratios[2]
        ),
    )
}

fn configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn report_bytes(config: &Path, threads: usize, out: &Path) -> Vec<u8> {
    let args = hqc_cli::cli::Args::parse_from([
        "hqc",
        "run",
        "--config",
        config.to_str().unwrap(),
        "--threads",
        &threads.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    hqc_cli::cli::execute(&args).unwrap();
    std::fs::read(out).unwrap()
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let files = configs();
    let mut differing = Vec::new();
    for (i, c) in files.iter().enumerate() {
        let base = report_bytes(c, 1, &dir.path().join(format!("{i}-1.json")));
        for t in [2, 4] {
            if report_bytes(c, t, &dir.path().join(format!("{i}-{t}.json"))) != base {
                differing.push(format!("{} at {t} threads", c.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} example configs at --threads 1, 2, 4: {}",
            files.len(),
            if differing.is_empty() {
                "all reports byte-identical".to_string()
            } else {
                format!("differ: {}", differing.join(", "))
            }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("group axioms", c01_group_axioms),
        ("metric invariances", c02_metric_invariances),
        ("CC optimizer", c03_cc_optimizer),
        ("measure scaling", c04_measure_scaling),
        ("Pansu estimator", c05_pansu),
        ("distortion", c06_distortion),
        ("BMO", c07_bmo),
        ("BMO transfer", c08_transfer),
        ("necessity chain", c09_necessity),
        ("Gotoh identity case", c10_gotoh_identity),
        ("roundness", c11_roundness),
        ("determinism", c12_determinism),
    ];
    // Numeric arguments select criteria; libtest flags are ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL in criteria {failed:?}");
        ExitCode::FAILURE
    }
}
