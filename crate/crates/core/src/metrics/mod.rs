//! Koranyi and Carnot-Caratheodory metrics, balls, and sampling on them.

pub mod cc;
pub mod sampling;
pub mod sets;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HqcError, Result};
use crate::group::{dilate_unchecked, increment, inverse, multiply, HPoint};

pub use cc::{
    cc_distance_estimate, cc_distance_ladder, metric_comparison, CcEstimate, CcOptions, ComparisonEstimate, HorizontalPath,
};
pub use sampling::{ball_sample_interior, sphere_sample, unit_sphere_point};
pub use sets::{set_diameter_estimate, set_distance_estimate, PointSet, SetBudget, SetEstimate};

/// Which of the two metrics a ball or experiment uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    #[default]
    Koranyi,
    Cc,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Koranyi => write!(f, "koranyi"),
            MetricKind::Cc => write!(f, "cc"),
        }
    }
}

/// Which side of the true value a sampled estimate sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSide {
    /// Estimate <= true value.
    Lower,
    /// Estimate >= true value.
    Upper,
    /// Unbiased Monte Carlo estimate.
    Unbiased,
}

/// `(|z|^4 + t^2)^{1/4}`.
pub fn koranyi_norm(p: &HPoint) -> f64 {
    let z2: f64 = p.z().iter().map(|c| c.norm_sqr()).sum();
    (z2 * z2 + p.t() * p.t()).sqrt().sqrt()
}

/// `d_K(p, q) = |q^{-1} p|_K`.
pub fn koranyi_distance(p: &HPoint, q: &HPoint) -> Result<f64> {
    Ok(koranyi_norm(&increment(p, q)?))
}

/// Distance in the requested metric. The CC branch runs the path optimizer
/// at the default resolution without descent restarts; the dual solve is
/// already globally optimal for the polygon.
pub fn distance(metric: MetricKind, p: &HPoint, q: &HPoint) -> Result<f64> {
    match metric {
        MetricKind::Koranyi => koranyi_distance(p, q),
        MetricKind::Cc => Ok(cc_distance_estimate(p, q, &quick_cc())?.distance),
    }
}

pub(crate) fn quick_cc() -> CcOptions {
    CcOptions {
        restarts: 0,
        ..CcOptions::default()
    }
}

/// Norm `d(p, 0)` in the requested metric.
pub fn norm(metric: MetricKind, p: &HPoint) -> Result<f64> {
    distance(metric, p, &HPoint::identity(p.dim()))
}

/// An open metric ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: HPoint,
    radius: f64,
    #[serde(default)]
    metric: MetricKind,
}

impl Ball {
    pub fn new(center: HPoint, radius: f64, metric: MetricKind) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self {
            center,
            radius,
            metric,
        })
    }

    pub fn koranyi(center: HPoint, radius: f64) -> Result<Self> {
        Self::new(center, radius, MetricKind::Koranyi)
    }

    pub fn centered(n: usize, radius: f64, metric: MetricKind) -> Result<Self> {
        Self::new(HPoint::identity(n), radius, metric)
    }

    pub fn center(&self) -> &HPoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, p: &HPoint) -> Result<bool> {
        let rel = increment(p, &self.center)?;
        Ok(match self.metric {
            MetricKind::Koranyi => koranyi_norm(&rel) < self.radius,
            // d_K <= d_cc, so the Koranyi test rejects cheaply first.
            MetricKind::Cc => {
                koranyi_norm(&rel) < self.radius
                    && norm(MetricKind::Cc, &rel)? < self.radius
            }
        })
    }

    /// `delta B(c, r) = B(delta c, delta r)`.
    pub fn dilate(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(invalid("delta", "dilation factor must be positive"));
        }
        Self::new(dilate_unchecked(delta, &self.center), delta * self.radius, self.metric)
    }

    /// `l B(c, r) = B(l c, r)`.
    pub fn translate(&self, l: &HPoint) -> Result<Self> {
        Self::new(multiply(l, &self.center)?, self.radius, self.metric)
    }

    /// Uniform (Haar) sample from the ball.
    pub fn sample_interior_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HPoint> {
        let unit = sampling::unit_ball_point(self.dim(), self.metric, rng)?;
        Ok(&self.center * &dilate_unchecked(self.radius, &unit))
    }

    /// Sample on the sphere `d(c, x) = r`.
    pub fn sample_boundary_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HPoint> {
        let omega = unit_sphere_point(self.dim(), rng);
        let scale = match self.metric {
            MetricKind::Koranyi => self.radius,
            MetricKind::Cc => self.radius / norm(MetricKind::Cc, &omega)?,
        };
        Ok(&self.center * &dilate_unchecked(scale, &omega))
    }

    /// Pulls `p` back into the closed ball along the dilation ray through the
    /// center. Identity for points already inside.
    pub fn clamp_radial(&self, p: &HPoint) -> Result<HPoint> {
        let rel = increment(p, &self.center)?;
        let d = match self.metric {
            MetricKind::Koranyi => koranyi_norm(&rel),
            MetricKind::Cc => norm(MetricKind::Cc, &rel)?,
        };
        if d <= self.radius {
            return Ok(p.clone());
        }
        Ok(&self.center * &dilate_unchecked(self.radius / d * (1.0 - 1e-12), &rel))
    }

    /// Axis-aligned box in absolute coordinates containing the ball:
    /// `z` within `r` of `c_z`, `t` within `r^2 + 2|c_z| r` of `c_t`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let r = self.radius;
        let c = self.center.coords();
        let half_t = r * r + 2.0 * self.center.z_norm() * r;
        let mut lo = Vec::with_capacity(2 * n + 1);
        let mut hi = Vec::with_capacity(2 * n + 1);
        for v in &c[..2 * n] {
            lo.push(v - r);
            hi.push(v + r);
        }
        lo.push(c[2 * n] - half_t);
        hi.push(c[2 * n] + half_t);
        (lo, hi)
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(HqcError::DimensionMismatch {
                expected: n,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B_{}({}, {})", self.metric, self.center, self.radius)
    }
}

/// Antipode of `p` about `c`: `c (c^{-1} p)^{-1}`.
pub fn antipode(c: &HPoint, p: &HPoint) -> Result<HPoint> {
    multiply(c, &inverse(&increment(p, c)?))
}
