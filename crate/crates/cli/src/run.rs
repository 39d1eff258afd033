//! Executes a validated config. Every estimator seed is derived from the
//! master seed and the position of the work item, never from the clock.

use hqc_core::bmo::{bmo_norm_estimate, jn_tail_fit, BallFamily, BmoEstimate, BmoVerdict, FamilySpec, JnFitReport};
use hqc_core::fields::ScalarField;
use hqc_core::measure::MeasurableSet;
use hqc_core::metrics::{cc_distance_estimate, cc_distance_ladder, metric_comparison, Ball, CcEstimate, ComparisonEstimate};
use hqc_core::pansu::{pansu_differential_estimate, PansuEstimate, PansuOptions, PansuVerdict};
use hqc_core::qc::{
    bmo_transfer_experiment, gotoh_check, gotoh_ladder, necessity_construction, qc_profile, roundness_ladder, GotohCheck,
    GotohLadder, NecessityConstruction, QcProfile, QcVerdict, RoundnessLadder, RoundnessVerdict, TransferReport,
};
use hqc_core::rng::{derive_seed, stream_rng};
use hqc_core::{HPoint, MapDescriptor, MapSpec, MetricKind, ValidatedHom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::error::CliError;

pub const VERSION: &str = concat!("hqc ", env!("CARGO_PKG_VERSION"));

/// Canonical output of one run. Contains no timing, so reruns with the same
/// config and seed serialize to identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: ExperimentConfig,
    pub results: Results,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Results {
    Distortion(QcProfile),
    Bmo(BmoEstimate),
    JnTail { norm: BmoEstimate, fits: Vec<JnFitReport> },
    Transfer(Vec<TransferReport>),
    Gotoh(GotohCheck),
    GotohLadder(GotohLadder),
    Necessity(Vec<NecessityConstruction>),
    Roundness(RoundnessLadder),
    Pansu(Vec<PansuEstimate>),
    Ccdist {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ladder: Vec<CcEstimate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comparison: Option<ComparisonEstimate>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn map(spec: &MapSpec, n: usize) -> Result<MapDescriptor, CliError> {
    let f = MapDescriptor::from_spec(spec)?;
    if let Some(h) = f.as_homomorphism(n) {
        if h.dim() != n {
            return Err(CliError::Config {
                path: "map".into(),
                message: format!("map acts on H^{}, config has n = {n}", h.dim()),
            });
        }
    }
    Ok(f)
}

fn points_or_origin(points: &[HPoint], n: usize) -> Vec<HPoint> {
    if points.is_empty() {
        vec![HPoint::identity(n)]
    } else {
        points.to_vec()
    }
}

fn check_dims(points: &[HPoint], n: usize, path: &str) -> Result<(), CliError> {
    for (i, p) in points.iter().enumerate() {
        if p.dim() != n {
            return Err(CliError::Config {
                path: format!("{path}[{i}]"),
                message: format!("point has {} coordinates, H^{n} needs {}", 2 * p.dim() + 1, 2 * n + 1),
            });
        }
    }
    Ok(())
}

/// Runs the experiment selected by `cfg.kind`.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let n = cfg.n;
    let seed = cfg.seed;
    let (results, checks) = match cfg.kind {
        ExperimentKind::Distortion => run_distortion(cfg.distortion.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Bmo => run_bmo(cfg.bmo.as_ref().unwrap(), n, seed)?,
        ExperimentKind::JnTail => run_jn(cfg.jn_tail.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Transfer => run_transfer(cfg.transfer.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Gotoh => run_gotoh(cfg.gotoh.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Necessity => run_necessity(cfg.necessity.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Roundness => run_roundness(cfg.roundness.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Pansu => run_pansu(cfg.pansu.as_ref().unwrap(), n, seed)?,
        ExperimentKind::Ccdist => run_ccdist(cfg.ccdist.as_ref().unwrap(), n, seed)?,
    };
    Ok(Report {
        version: VERSION.to_string(),
        config: cfg.clone(),
        results,
        verdict: Verdict {
            pass: checks.iter().all(|c| c.pass),
            checks,
        },
    })
}

type Outcome = (Results, Vec<Check>);

fn run_distortion(c: &DistortionConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let f = map(&c.map, n)?;
    let points = points_or_origin(&c.points, n);
    check_dims(&points, n, "distortion.points")?;
    let prof = qc_profile(&f, &points, &c.radii, &c.options, seed)?;
    let pass = prof.verdict == QcVerdict::QcConsistent;
    let detail = match &prof.verdict {
        QcVerdict::QcConsistent => format!("plateau K = {:.6} <= {}", prof.plateau, prof.threshold),
        QcVerdict::NotQcConsistent { point, slope } => format!("K grows at point {point}: last-decade slope {slope:.3}"),
        QcVerdict::Inconclusive => format!("plateau K = {:.6} above {}", prof.plateau, prof.threshold),
    };
    Ok((Results::Distortion(prof), vec![check("qc-consistent", pass, detail)]))
}

fn bmo_check(est: &BmoEstimate) -> Check {
    match &est.verdict {
        BmoVerdict::Bounded => check("bmo-bounded", true, format!("norm >= {:.6}", est.value)),
        BmoVerdict::NotBmo { slope } => check("bmo-bounded", false, format!("oscillation grows with slope {slope:.3}")),
        BmoVerdict::Undetermined => check("bmo-bounded", false, "radius ladder too short to judge growth"),
    }
}

fn run_bmo(c: &BmoConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let u = ScalarField::from_spec(&c.function)?;
    let family = BallFamily::from_spec(&c.family, n)?;
    let est = bmo_norm_estimate(&u, &family, &c.options, seed)?;
    let checks = vec![bmo_check(&est)];
    Ok((Results::Bmo(est), checks))
}

fn random_balls(n: usize, count: usize, seed: u64) -> Result<Vec<Ball>, CliError> {
    let region = Ball::centered(n, 4.0, MetricKind::Koranyi)?;
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let center = region.sample_interior_with(&mut rng)?;
            let radius = 2f64.powf(rng.random_range(-2.0..=2.0));
            Ok(Ball::koranyi(center, radius)?)
        })
        .collect()
}

fn run_jn(c: &JnTailConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let u = ScalarField::from_spec(&c.function)?;
    let family = BallFamily::from_spec(&c.family, n)?;
    let norm = bmo_norm_estimate(&u, &family, &c.bmo, derive_seed(seed, &[0]))?;
    let balls = if c.balls.is_empty() {
        random_balls(n, c.random_balls, derive_seed(seed, &[1]))?
    } else {
        c.balls.clone()
    };
    let mut checks = Vec::new();
    if norm.value <= 0.0 {
        checks.push(check("jn-tail", false, "BMO norm estimate is zero; nothing to fit"));
        return Ok((Results::JnTail { norm, fits: Vec::new() }, checks));
    }
    let fits: Vec<JnFitReport> = balls
        .iter()
        .enumerate()
        .map(|(i, b)| jn_tail_fit(&u, b, norm.value, &c.jn, derive_seed(seed, &[2, i as u64])))
        .collect::<Result<_, _>>()?;
    for (i, fit) in fits.iter().enumerate() {
        checks.push(check(
            format!("jn-tail[{i}]"),
            fit.pass,
            match fit.a_hat {
                Some(a) => format!("A = {a:.4}, R^2 = {:.4}, {} points", fit.r_squared, fit.fitted_points),
                None => "tail empty beyond the grid".to_string(),
            },
        ));
    }
    Ok((Results::JnTail { norm, fits }, checks))
}

fn run_transfer(c: &TransferConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let family = BallFamily::from_spec(&c.family, n)?;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for (i, ms) in c.maps.iter().enumerate() {
        let f = map(ms, n)?;
        for (j, fs) in c.functions.iter().enumerate() {
            let u = ScalarField::from_spec(fs)?;
            let r = bmo_transfer_experiment(&f, &u, &family, &c.options, derive_seed(seed, &[i as u64, j as u64]))?;
            let (pass, detail) = match r.ratio {
                Some(q) if r.degenerate => (true, format!("ratio {q} (both norms zero)")),
                Some(q) => (q >= c.band[0] && q <= c.band[1], format!("ratio {q:.4} in [{}, {}]", c.band[0], c.band[1])),
                None => (false, "source norm zero, image norm positive".to_string()),
            };
            checks.push(check(format!("transfer[{}; {}]", r.map, r.field), pass, detail));
            reports.push(r);
        }
    }
    Ok((Results::Transfer(reports), checks))
}

fn set(spec: &SetSpec, n: usize) -> Result<MeasurableSet, CliError> {
    Ok(match spec {
        SetSpec::Ball { center, radius } => {
            check_dims(std::slice::from_ref(center), n, "gotoh.pairs")?;
            MeasurableSet::ball(Ball::koranyi(center.clone(), *radius)?)
        }
        SetSpec::HalfSpace { coord, offset } => MeasurableSet::half_space(*coord, *offset),
    })
}

/// Small default family for the Gotoh functional: 3^{2n+1} centers in the
/// unit box, radii 1/4 .. 2.
pub fn gotoh_default_family() -> FamilySpec {
    FamilySpec::Lattice {
        per_axis: 3,
        extent: 1.0,
        center: None,
        r_min: 0.25,
        r_max: 2.0,
        ratio: 2.0,
        metric: MetricKind::Koranyi,
    }
}

fn run_gotoh(c: &GotohConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let f = map(&c.map, n)?;
    if let Some(l) = &c.ladder {
        let at = l.at.clone().unwrap_or_else(|| HPoint::identity(n));
        check_dims(std::slice::from_ref(&at), n, "gotoh.ladder.at")?;
        let ladder = gotoh_ladder(&f, &at, &l.radii, &c.options, &c.lambda, seed)?;
        let ks: Vec<String> = ladder
            .rows
            .iter()
            .map(|r| r.best_k.map_or("UNSAT".to_string(), |k| format!("{k}")))
            .collect();
        // A bounded constant along the ladder is the QC-consistent outcome.
        let pass = !ladder.grows;
        let detail = format!("best K at alpha = 1 per radius: {}", ks.join(", "));
        return Ok((Results::GotohLadder(ladder), vec![check("gotoh-bounded", pass, detail)]));
    }
    let mut specs: Vec<(MeasurableSet, MeasurableSet)> = c
        .pairs
        .iter()
        .map(|[a, b]| Ok((set(a, n)?, set(b, n)?)))
        .collect::<Result<_, CliError>>()?;
    let region = Ball::centered(n, 2.0, MetricKind::Koranyi)?;
    let mut rng = stream_rng(derive_seed(seed, &[0]), 0);
    for _ in 0..c.random_pairs {
        let mut one = || -> Result<MeasurableSet, CliError> {
            let center = region.sample_interior_with(&mut rng)?;
            let radius = rng.random_range(0.1..0.6);
            Ok(MeasurableSet::ball(Ball::koranyi(center, radius)?))
        };
        let a = one()?;
        let b = one()?;
        specs.push((a, b));
    }
    let left = BallFamily::from_spec(c.left_family.as_ref().unwrap_or(&gotoh_default_family()), n)?;
    let right = match &c.right_family {
        Some(s) => BallFamily::from_spec(s, n)?,
        None if f.similarity_factor().is_some() => left.image(&f)?,
        None => left.clone(),
    };
    let res = gotoh_check(&f, &specs, &left, &right, &c.options, derive_seed(seed, &[1]))?;
    let detail = match res.satisfied {
        Some((k, a)) => format!("holds at K = {k}, alpha = {a} over {} pairs", res.reports.len()),
        None => "no grid (K, alpha) works".to_string(),
    };
    let checks = vec![check("gotoh", res.satisfied.is_some(), detail)];
    Ok((Results::Gotoh(res), checks))
}

fn run_necessity(c: &NecessityConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let f = map(&c.map, n)?;
    let hom = f.as_homomorphism(n).ok_or_else(|| CliError::Config {
        path: "necessity.map".into(),
        message: format!("`{}` is not a homogeneous homomorphism", f.name()),
    })?;
    let l = ValidatedHom::new(hom)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, &r) in c.radii.iter().enumerate() {
        let row = necessity_construction(&l, r, &c.budget, derive_seed(seed, &[i as u64]))?;
        checks.push(check(
            format!("necessity[r = {r}]"),
            row.holds(),
            format!(
                "min pair {:.6} vs {:.6}; dist {:.6} vs {:.6}; 3/8 diam {:.6}",
                row.pairwise.min_distance,
                row.pairwise.bound,
                row.distance.value,
                row.distance_bound,
                0.375 * row.diameter.value
            ),
        ));
        rows.push(row);
    }
    Ok((Results::Necessity(rows), checks))
}

fn run_roundness(c: &RoundnessConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let f = map(&c.map, n)?;
    let at = c.at.clone().unwrap_or_else(|| HPoint::identity(n));
    check_dims(std::slice::from_ref(&at), n, "roundness.at")?;
    let lad = roundness_ladder(&f, &at, &c.radii, c.threshold_factor, &c.options, seed)?;
    let pass = lad.verdict == RoundnessVerdict::Round;
    let detail = format!(
        "running min {:.6} vs threshold {:.6} (identity {:.6})",
        lad.liminf, lad.threshold, lad.reference
    );
    Ok((Results::Roundness(lad), vec![check("roundness", pass, detail)]))
}

fn run_pansu(c: &PansuConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let f = map(&c.map, n)?;
    let points = points_or_origin(&c.points, n);
    check_dims(&points, n, "pansu.points")?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let opts = PansuOptions {
            seed: derive_seed(seed, &[i as u64]),
            ..c.options.clone()
        };
        let est = pansu_differential_estimate(&f, p, &opts)?;
        let (pass, detail) = match &est.verdict {
            PansuVerdict::Differentiable => (
                true,
                format!("residual slope {:.3}", est.convergence.map_or(f64::NAN, |l| l.slope)),
            ),
            PansuVerdict::ExactToRoundoff => (true, "residuals at round-off level".to_string()),
            PansuVerdict::NotDifferentiable { growth_exponent } => {
                (false, format!("residuals grow, exponent {growth_exponent:.3}"))
            }
            PansuVerdict::Inconclusive => (false, "no clear trend".to_string()),
        };
        checks.push(check(format!("pansu[{i}]"), pass, detail));
        rows.push(est);
    }
    Ok((Results::Pansu(rows), checks))
}

fn run_ccdist(c: &CcdistConfig, n: usize, seed: u64) -> Result<Outcome, CliError> {
    let mut opts = c.options.clone();
    opts.seed = derive_seed(seed, &[0]);
    let mut ladder = Vec::new();
    let mut checks = Vec::new();
    if let (Some(p), Some(q)) = (&c.p, &c.q) {
        check_dims(&[p.clone(), q.clone()], n, "ccdist.p/q")?;
        ladder = match &c.ladder {
            Some(l) => cc_distance_ladder(p, q, l, &opts)?,
            None => vec![cc_distance_estimate(p, q, &opts)?],
        };
        let last = ladder.last().unwrap();
        checks.push(check(
            "cc-converged",
            last.converged,
            format!("d_cc <= {:.6}, residual {:.1e}", last.distance, last.constraint_residual),
        ));
    }
    let comparison = match &c.comparison {
        Some(cmp) => {
            let est = metric_comparison(n, cmp.pairs, cmp.radius, &opts, derive_seed(seed, &[1]))?;
            checks.push(check(
                "comparison",
                est.lower > 0.0 && est.upper.is_finite() && est.unconverged == 0,
                format!("d_cc / d_K in [{:.6}, {:.6}]", est.lower, est.upper),
            ));
            Some(est)
        }
        None => None,
    };
    Ok((Results::Ccdist { ladder, comparison }, checks))
}
