//! Numerical Pansu differentials.
//!
//! For each direction `h` on the Koranyi unit sphere and each scale `s` the
//! rescaled increment is `w(h, s) = delta_{1/s}(f(p)^{-1} f(p delta_s h))`
//! (right increments, the default) or `delta_{1/s}(f(p)^{-1} f(delta_s(h) p))`
//! (left increments). The differential is fitted at the finest scale and the
//! table reports `sup_h d_K(w(h, s), L(h))` at every scale.
//!
//! Increments of `t` lose about `sqrt(eps) |f(p)| / s` to cancellation once
//! rescaled, so residuals below that floor carry no information. Maps that
//! are homomorphisms up to translation sit entirely below it.
//!
//! For a smooth contact map whose horizontal part is not linear, the rescaled
//! increment differs from `L(h)` by `O(s)` in `t`, so the Koranyi residual
//! decays like `s^{1/2}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::group::{dilate_unchecked, inverse, multiply, HPoint, HomogeneousHom};
use crate::maps::MapDescriptor;
use crate::metrics::sampling::axis_directions;
use crate::metrics::{koranyi_distance, koranyi_norm, unit_sphere_point};
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{log_log_fit, LinearFit};

/// Which side the small displacement enters on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncrementSide {
    /// `f(p)^{-1} f(p h)`.
    #[default]
    Right,
    /// `f(p)^{-1} f(h p)`.
    Left,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PansuOptions {
    /// Decreasing positive scales.
    pub scales: Vec<f64>,
    /// Random directions on the unit sphere, on top of the coordinate axes.
    pub random_directions: usize,
    /// Extra user directions (rescaled onto the unit sphere).
    pub directions: Vec<HPoint>,
    pub side: IncrementSide,
    pub seed: u64,
    /// Growth factor over the last three scales that flags divergence.
    pub divergence_factor: f64,
}

impl Default for PansuOptions {
    fn default() -> Self {
        Self {
            scales: (1..=6).map(|k| 4f64.powi(-k)).collect(),
            random_directions: 48,
            directions: Vec::new(),
            side: IncrementSide::Right,
            seed: 0,
            divergence_factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub scale: f64,
    /// `sup_h d_K(w(h, s), L(h))`.
    pub residual: f64,
    /// `sup_h |w(h, s)|_K`.
    pub increment_size: f64,
    /// Round-off level below which `residual` is noise.
    pub noise_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PansuVerdict {
    /// Residuals shrink with the scale.
    Differentiable,
    /// Every residual is at round-off level.
    ExactToRoundoff,
    /// Residuals grow over the last three scales.
    NotDifferentiable { growth_exponent: f64 },
    /// Neither pattern is clear on this ladder.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PansuEstimate {
    pub point: HPoint,
    pub side: IncrementSide,
    pub differential: HomogeneousHom,
    /// Max entry of `A^T J A - mu J` for the fit; near 0 for a homomorphism.
    pub symplectic_residual: f64,
    pub rows: Vec<ScaleRow>,
    /// Log-log fit of residual against scale over rows above the floor.
    pub convergence: Option<LinearFit>,
    pub verdict: PansuVerdict,
    pub directions: usize,
}

impl PansuEstimate {
    pub fn is_divergent(&self) -> bool {
        matches!(self.verdict, PansuVerdict::NotDifferentiable { .. })
    }
}

fn increment_at(f: &MapDescriptor, p: &HPoint, fp_inv: &HPoint, h: &HPoint, s: f64, side: IncrementSide) -> Result<HPoint> {
    let step = dilate_unchecked(s, h);
    let moved = match side {
        IncrementSide::Right => multiply(p, &step)?,
        IncrementSide::Left => multiply(&step, p)?,
    };
    let inc = multiply(fp_inv, &f.forward(&moved)?)?;
    Ok(dilate_unchecked(1.0 / s, &inc))
}

fn direction_set(n: usize, opts: &PansuOptions) -> Vec<HPoint> {
    let mut dirs = axis_directions(n);
    let mut rng = stream_rng(derive_seed(opts.seed, &[0xd1]), 0);
    dirs.extend((0..opts.random_directions).map(|_| unit_sphere_point(n, &mut rng)));
    for d in &opts.directions {
        let k = koranyi_norm(d);
        if k > 0.0 {
            dirs.push(dilate_unchecked(1.0 / k, d));
        }
    }
    dirs
}

/// Least-squares `(A, mu)` with `w_z ~ A h_z` and `w_t ~ mu h_t`.
fn fit(dirs: &[HPoint], incs: &[HPoint]) -> Result<HomogeneousHom> {
    let d = 2 * dirs[0].dim();
    let mut hh = DMatrix::<f64>::zeros(d, d);
    let mut wh = DMatrix::<f64>::zeros(d, d);
    let (mut num, mut den) = (0.0, 0.0);
    for (h, w) in dirs.iter().zip(incs) {
        let hv: DVector<f64> = h.horizontal();
        let wv: DVector<f64> = w.horizontal();
        hh += &hv * hv.transpose();
        wh += &wv * hv.transpose();
        num += w.t() * h.t();
        den += h.t() * h.t();
    }
    let inv = hh
        .try_inverse()
        .ok_or_else(|| invalid("directions", "directions do not span the horizontal layer"))?;
    if den == 0.0 {
        return Err(invalid("directions", "no direction has a vertical component"));
    }
    HomogeneousHom::new(wh * inv, num / den)
}

/// Estimates the Pansu differential of `f` at `p`.
pub fn pansu_differential_estimate(f: &MapDescriptor, p: &HPoint, opts: &PansuOptions) -> Result<PansuEstimate> {
    if opts.scales.is_empty() || opts.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("scales", "scales must be positive and finite"));
    }
    if opts.scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("scales", "scales must be strictly decreasing"));
    }
    let n = p.dim();
    let fp = f.forward(p)?;
    let fp_inv = inverse(&fp);
    let dirs = direction_set(n, opts);

    // All (scale, direction) increments, computed in parallel and laid out
    // scale-major.
    let jobs: Vec<(usize, usize)> = (0..opts.scales.len())
        .flat_map(|k| (0..dirs.len()).map(move |j| (k, j)))
        .collect();
    let incs: Vec<HPoint> = jobs
        .par_iter()
        .map(|&(k, j)| increment_at(f, p, &fp_inv, &dirs[j], opts.scales[k], opts.side))
        .collect::<Result<_>>()?;
    let per_scale: Vec<&[HPoint]> = incs.chunks(dirs.len()).collect();

    let differential = fit(&dirs, per_scale[per_scale.len() - 1])?;
    let size = 1.0 + koranyi_norm(&fp) + koranyi_norm(p);
    // The fit inherits the round-off of the finest scale, and every row is
    // compared against the fit.
    let floor_at = |s: f64| (64.0 * f64::EPSILON).sqrt() * size / s;
    let fit_floor = floor_at(opts.scales[opts.scales.len() - 1]);
    let rows: Vec<ScaleRow> = opts
        .scales
        .iter()
        .zip(&per_scale)
        .map(|(&s, ws)| {
            let mut residual: f64 = 0.0;
            let mut increment_size: f64 = 0.0;
            for (h, w) in dirs.iter().zip(ws.iter()) {
                let lh = differential.apply_unchecked(h);
                residual = residual.max(koranyi_distance(w, &lh)?);
                increment_size = increment_size.max(koranyi_norm(w));
            }
            Ok(ScaleRow {
                scale: s,
                residual,
                increment_size,
                noise_floor: floor_at(s) + fit_floor,
            })
        })
        .collect::<Result<_>>()?;

    let above: Vec<&ScaleRow> = rows.iter().filter(|r| r.residual > 4.0 * r.noise_floor).collect();
    let convergence = if above.len() >= 2 {
        let xs: Vec<f64> = above.iter().map(|r| r.scale).collect();
        let ys: Vec<f64> = above.iter().map(|r| r.residual).collect();
        log_log_fit(&xs, &ys)
    } else {
        None
    };

    let tail = &rows[rows.len().saturating_sub(3)..];
    let growing = tail.len() == 3
        && tail.windows(2).all(|w| w[1].residual > w[0].residual)
        && tail[2].residual >= opts.divergence_factor * tail[0].residual
        && tail[2].residual > 4.0 * tail[2].noise_floor;
    let verdict = if growing {
        let xs: Vec<f64> = tail.iter().map(|r| r.scale).collect();
        let ys: Vec<f64> = tail.iter().map(|r| r.residual).collect();
        let fit = log_log_fit(&xs, &ys).expect("three positive points");
        PansuVerdict::NotDifferentiable {
            growth_exponent: fit.slope,
        }
    } else if above.is_empty() {
        PansuVerdict::ExactToRoundoff
    } else if convergence.as_ref().is_some_and(|c| c.slope > 0.0) {
        PansuVerdict::Differentiable
    } else {
        PansuVerdict::Inconclusive
    };

    Ok(PansuEstimate {
        point: p.clone(),
        side: opts.side,
        symplectic_residual: differential.symplectic_residual(),
        differential,
        rows,
        convergence,
        verdict,
        directions: dirs.len(),
    })
}
