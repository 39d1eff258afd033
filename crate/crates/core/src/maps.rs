//! Homeomorphisms of `H^n`: the fixed catalog plus user-supplied evaluators.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HqcError, Result};
use crate::group::{dilate, dilate_unchecked, inverse, multiply, HPoint, HomogeneousHom, ValidatedHom};
use crate::metrics::{Ball, MetricKind};

/// Serializable catalog entries. `compose` applies its maps left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    LeftTranslation { by: HPoint },
    Rotation { theta: f64 },
    Conjugation,
    Dilation { lambda: f64 },
    Anisotropic { a: f64 },
    VerticalStretch { c: f64 },
    QuadraticShear { c: f64 },
    Homomorphism { matrix: Vec<Vec<f64>>, mu: f64 },
    Compose { maps: Vec<MapSpec> },
}

impl MapSpec {
    pub fn catalog_ids() -> &'static [(&'static str, &'static str)] {
        &[
            ("identity", "(z, t) -> (z, t)"),
            ("left-translation", "p -> by * p; params: by = [x.., y.., t]"),
            ("rotation", "(z, t) -> (e^{i theta} z, t); params: theta"),
            ("conjugation", "(z, t) -> (conj z, -t)"),
            ("dilation", "(z, t) -> (lambda z, lambda^2 t); params: lambda > 0"),
            ("anisotropic", "x_1 -> a x_1, y_1 -> y_1 / a; params: a > 0"),
            ("vertical-stretch", "(z, t) -> (z, c t); params: c != 0"),
            ("quadratic-shear", "(x_1, y_1, t) -> (x_1, y_1 + c x_1^2, t - 2c x_1^3 / 3); contact, not affine"),
            ("homomorphism", "(z, t) -> (A z, mu t); params: matrix (2n x 2n rows), mu"),
            ("compose", "apply maps[0], then maps[1], ...; params: maps"),
        ]
    }
}

type PointFn = dyn Fn(&HPoint) -> HPoint + Send + Sync;

/// A user map given by its evaluators.
pub struct CustomMap {
    pub name: String,
    pub forward: Box<PointFn>,
    pub inverse: Option<Box<PointFn>>,
    pub group_compatible: bool,
    pub expected_qc: Option<bool>,
}

#[derive(Clone, Copy, PartialEq)]
enum PairScope {
    /// Same 2x2 block on every coordinate pair.
    Every,
    /// Block on the first pair only.
    First,
    /// Matrix already has the target dimension.
    Exact,
}

#[derive(Clone)]
enum MapKind {
    Identity,
    Translation(HPoint),
    /// Stored in `H^1` form when `pair` is not `Exact`, lifted on demand.
    Linear {
        hom: HomogeneousHom,
        label: String,
        pair: PairScope,
    },
    VerticalStretch(f64),
    QuadraticShear(f64),
    Compose(Vec<MapDescriptor>),
    Custom(Arc<CustomMap>),
    /// `v -> delta_{1/s}(f(at)^{-1} f(at delta_s v))`
    BlowUp {
        base: Box<MapDescriptor>,
        at: HPoint,
        image_at: HPoint,
        scale: f64,
    },
}

/// An evaluable homeomorphism with optional inverse and metadata.
#[derive(Clone)]
pub struct MapDescriptor {
    kind: MapKind,
    spec: Option<MapSpec>,
}

impl fmt::Debug for MapDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MapDescriptor({})", self.name())
    }
}

impl MapDescriptor {
    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let kind = match spec {
            MapSpec::Identity => MapKind::Identity,
            MapSpec::LeftTranslation { by } => MapKind::Translation(by.clone()),
            MapSpec::Rotation { theta } => {
                finite("theta", *theta)?;
                MapKind::Linear {
                    hom: HomogeneousHom::rotation(1, *theta),
                    label: format!("rotation({theta})"),
                    pair: PairScope::Every,
                }
            }
            MapSpec::Conjugation => MapKind::Linear {
                hom: HomogeneousHom::conjugation(1),
                label: "conjugation".into(),
                pair: PairScope::Every,
            },
            MapSpec::Dilation { lambda } => {
                positive("lambda", *lambda)?;
                MapKind::Linear {
                    hom: HomogeneousHom::dilation(1, *lambda),
                    label: format!("dilation({lambda})"),
                    pair: PairScope::Every,
                }
            }
            MapSpec::Anisotropic { a } => {
                positive("a", *a)?;
                MapKind::Linear {
                    hom: HomogeneousHom::anisotropic(1, *a),
                    label: format!("anisotropic({a})"),
                    pair: PairScope::First,
                }
            }
            MapSpec::VerticalStretch { c } => {
                finite("c", *c)?;
                if *c == 0.0 {
                    return Err(invalid("c", "vertical stretch factor must be non-zero"));
                }
                MapKind::VerticalStretch(*c)
            }
            MapSpec::QuadraticShear { c } => {
                finite("c", *c)?;
                MapKind::QuadraticShear(*c)
            }
            MapSpec::Homomorphism { matrix, mu } => {
                let hom = ValidatedHom::new(HomogeneousHom::from_rows(matrix, *mu)?)?;
                MapKind::Linear {
                    hom: hom.hom().clone(),
                    label: "homomorphism".into(),
                    pair: PairScope::Exact,
                }
            }
            MapSpec::Compose { maps } => MapKind::Compose(
                maps.iter()
                    .map(MapDescriptor::from_spec)
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Self {
            kind,
            spec: Some(spec.clone()),
        })
    }

    pub fn identity() -> Self {
        Self::from_spec(&MapSpec::Identity).expect("identity")
    }

    pub fn left_translation(by: HPoint) -> Self {
        Self::from_spec(&MapSpec::LeftTranslation { by }).expect("translation")
    }

    pub fn dilation(lambda: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::Dilation { lambda })
    }

    pub fn rotation(theta: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::Rotation { theta })
    }

    pub fn conjugation() -> Self {
        Self::from_spec(&MapSpec::Conjugation).expect("conjugation")
    }

    pub fn anisotropic(a: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::Anisotropic { a })
    }

    pub fn vertical_stretch(c: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::VerticalStretch { c })
    }

    pub fn quadratic_shear(c: f64) -> Result<Self> {
        Self::from_spec(&MapSpec::QuadraticShear { c })
    }

    pub fn compose(maps: Vec<MapDescriptor>) -> Self {
        let spec = maps
            .iter()
            .map(|m| m.spec.clone())
            .collect::<Option<Vec<_>>>()
            .map(|maps| MapSpec::Compose { maps });
        Self {
            kind: MapKind::Compose(maps),
            spec,
        }
    }

    /// Wraps a validated homomorphism of any dimension.
    pub fn homomorphism(hom: &ValidatedHom) -> Self {
        let h = hom.hom();
        let rows = (0..h.matrix().nrows())
            .map(|i| h.matrix().row(i).iter().copied().collect())
            .collect();
        Self {
            kind: MapKind::Linear {
                hom: h.clone(),
                label: "homomorphism".into(),
                pair: PairScope::Exact,
            },
            spec: Some(MapSpec::Homomorphism {
                matrix: rows,
                mu: h.mu(),
            }),
        }
    }

    pub fn custom(map: CustomMap) -> Self {
        Self {
            kind: MapKind::Custom(Arc::new(map)),
            spec: None,
        }
    }

    /// The rescaled map `v -> delta_{1/s}(f(at)^{-1} f(at delta_s v))` whose
    /// small-`s` limit is the Pansu differential at `at`.
    pub fn blow_up(&self, at: &HPoint, scale: f64) -> Result<Self> {
        positive("scale", scale)?;
        let image_at = self.forward(at)?;
        Ok(Self {
            kind: MapKind::BlowUp {
                base: Box::new(self.clone()),
                at: at.clone(),
                image_at,
                scale,
            },
            spec: None,
        })
    }

    pub fn spec(&self) -> Option<&MapSpec> {
        self.spec.as_ref()
    }

    pub fn name(&self) -> String {
        match &self.kind {
            MapKind::Identity => "identity".into(),
            MapKind::Translation(by) => format!("left-translation({by})"),
            MapKind::Linear { label, .. } => label.clone(),
            MapKind::VerticalStretch(c) => format!("vertical-stretch({c})"),
            MapKind::QuadraticShear(c) => format!("quadratic-shear({c})"),
            MapKind::Compose(maps) => format!(
                "compose[{}]",
                maps.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
            ),
            MapKind::Custom(c) => c.name.clone(),
            MapKind::BlowUp { base, at, scale, .. } => {
                format!("blow-up({} at {at}, s={scale})", base.name())
            }
        }
    }

    pub fn forward(&self, p: &HPoint) -> Result<HPoint> {
        match &self.kind {
            MapKind::Identity => Ok(p.clone()),
            MapKind::Translation(by) => multiply(by, p),
            MapKind::Linear { hom, pair, .. } => lift_linear(hom, *pair, p.dim())?.apply(p),
            MapKind::VerticalStretch(c) => Ok(HPoint::from_parts_unchecked(p.z().to_vec(), c * p.t())),
            MapKind::QuadraticShear(c) => Ok(shear(p, *c)),
            MapKind::Compose(maps) => maps.iter().try_fold(p.clone(), |acc, m| m.forward(&acc)),
            MapKind::Custom(c) => Ok((c.forward)(p)),
            MapKind::BlowUp {
                base,
                at,
                image_at,
                scale,
            } => {
                let moved = multiply(at, &dilate_unchecked(*scale, p))?;
                let inc = multiply(&inverse(image_at), &base.forward(&moved)?)?;
                dilate(1.0 / scale, &inc)
            }
        }
    }

    pub fn has_inverse(&self) -> bool {
        match &self.kind {
            MapKind::Custom(c) => c.inverse.is_some(),
            MapKind::Compose(maps) => maps.iter().all(|m| m.has_inverse()),
            MapKind::BlowUp { base, .. } => base.has_inverse(),
            _ => true,
        }
    }

    /// Evaluates `f^{-1}(p)`.
    pub fn inverse_eval(&self, p: &HPoint) -> Result<HPoint> {
        match &self.kind {
            MapKind::Identity => Ok(p.clone()),
            MapKind::Translation(by) => multiply(&inverse(by), p),
            MapKind::Linear { hom, pair, .. } => lift_linear(hom, *pair, p.dim())?.inverse()?.apply(p),
            MapKind::VerticalStretch(c) => Ok(HPoint::from_parts_unchecked(p.z().to_vec(), p.t() / c)),
            MapKind::QuadraticShear(c) => Ok(shear(p, -c)),
            MapKind::Compose(maps) => maps.iter().rev().try_fold(p.clone(), |acc, m| m.inverse_eval(&acc)),
            MapKind::Custom(c) => match &c.inverse {
                Some(inv) => Ok(inv(p)),
                None => Err(HqcError::MissingInverse { map: c.name.clone() }),
            },
            MapKind::BlowUp {
                base,
                at,
                image_at,
                scale,
            } => {
                let moved = multiply(image_at, &dilate_unchecked(*scale, p))?;
                let pre = multiply(&inverse(at), &base.inverse_eval(&moved)?)?;
                dilate(1.0 / scale, &pre)
            }
        }
    }

    /// True for maps of the form `translation o homomorphism`.
    pub fn is_group_compatible(&self) -> bool {
        match &self.kind {
            MapKind::Identity | MapKind::Translation(_) | MapKind::Linear { .. } => true,
            MapKind::VerticalStretch(c) => *c == 1.0,
            MapKind::QuadraticShear(c) => *c == 0.0,
            MapKind::Compose(maps) => maps.iter().all(|m| m.is_group_compatible()),
            MapKind::Custom(c) => c.group_compatible,
            MapKind::BlowUp { base, .. } => base.is_group_compatible(),
        }
    }

    /// Catalog expectation of global quasiconformality, when known. The
    /// quadratic shear is smooth and contact but its distortion grows with
    /// `|x_1|`, so it is not expected to be uniformly QC.
    pub fn expected_qc(&self) -> Option<bool> {
        match &self.kind {
            MapKind::Identity | MapKind::Translation(_) | MapKind::Linear { .. } => Some(true),
            MapKind::VerticalStretch(c) => Some(c.abs() == 1.0),
            MapKind::QuadraticShear(c) => Some(*c == 0.0),
            MapKind::Compose(maps) => maps
                .iter()
                .map(|m| m.expected_qc())
                .try_fold(true, |acc, e| e.map(|v| acc && v)),
            MapKind::Custom(c) => c.expected_qc,
            MapKind::BlowUp { base, .. } => base.expected_qc(),
        }
    }

    /// The map as a homogeneous homomorphism in `H^n`, when it is one.
    pub fn as_homomorphism(&self, n: usize) -> Option<HomogeneousHom> {
        match &self.kind {
            MapKind::Identity => Some(HomogeneousHom::identity(n)),
            MapKind::Linear { hom, pair, .. } => lift_linear(hom, *pair, n).ok(),
            MapKind::VerticalStretch(c) if *c == 1.0 => Some(HomogeneousHom::identity(n)),
            MapKind::Compose(maps) => maps.iter().try_fold(HomogeneousHom::identity(n), |acc, m| {
                m.as_homomorphism(n).and_then(|h| h.compose(&acc).ok())
            }),
            _ => None,
        }
    }

    /// Closed-form Pansu differential at `p` (right increments), when known.
    pub fn known_differential(&self, p: &HPoint) -> Option<HomogeneousHom> {
        let n = p.dim();
        match &self.kind {
            MapKind::Identity | MapKind::Translation(_) => Some(HomogeneousHom::identity(n)),
            MapKind::Linear { .. } => self.as_homomorphism(n),
            MapKind::VerticalStretch(c) if *c == 1.0 => Some(HomogeneousHom::identity(n)),
            MapKind::QuadraticShear(c) => {
                let mut a = nalgebra::DMatrix::identity(2 * n, 2 * n);
                a[(n, 0)] = 2.0 * c * p.z()[0].re;
                HomogeneousHom::new(a, 1.0).ok()
            }
            MapKind::Compose(maps) => {
                let mut at = p.clone();
                let mut acc = HomogeneousHom::identity(n);
                for m in maps {
                    let d = m.known_differential(&at)?;
                    acc = d.compose(&acc).ok()?;
                    at = m.forward(&at).ok()?;
                }
                Some(acc)
            }
            _ => None,
        }
    }

    /// Constant Jacobian determinant `|det Df|` in `H^n`, for maps that have
    /// one.
    pub fn jacobian(&self, n: usize) -> Option<f64> {
        match &self.kind {
            MapKind::Identity | MapKind::Translation(_) => Some(1.0),
            MapKind::Linear { hom, pair, .. } => {
                let h = lift_linear(hom, *pair, n).ok()?;
                Some(h.matrix().clone().determinant().abs() * h.mu().abs())
            }
            MapKind::VerticalStretch(c) => Some(c.abs()),
            MapKind::QuadraticShear(_) => Some(1.0),
            MapKind::Compose(maps) => maps.iter().try_fold(1.0, |acc, m| m.jacobian(n).map(|j| acc * j)),
            MapKind::Custom(_) => None,
            MapKind::BlowUp { base, .. } => base.jacobian(n),
        }
    }

    /// Scale factor `k` with `f(B(c, r)) = B(f(c), k r)` for every Koranyi
    /// ball, for the similarities in the catalog.
    pub fn similarity_factor(&self) -> Option<f64> {
        match &self.kind {
            MapKind::Identity | MapKind::Translation(_) => Some(1.0),
            MapKind::Linear { hom, .. } => linear_similarity(hom),
            MapKind::Compose(maps) => maps.iter().try_fold(1.0, |acc, m| m.similarity_factor().map(|k| acc * k)),
            _ => None,
        }
    }

    /// Exact image of a Koranyi ball under a similarity.
    pub fn ball_image(&self, ball: &Ball) -> Option<Ball> {
        if ball.metric() != MetricKind::Koranyi {
            return None;
        }
        let k = self.similarity_factor()?;
        let c = self.forward(ball.center()).ok()?;
        Ball::new(c, k * ball.radius(), MetricKind::Koranyi).ok()
    }

    /// A Koranyi ball guaranteed to contain `f(ball)`, when one is known.
    pub fn image_bound(&self, ball: &Ball) -> Option<Ball> {
        if ball.metric() != MetricKind::Koranyi {
            return None;
        }
        let r = ball.radius();
        let c = ball.center();
        let fc = self.forward(c).ok()?;
        let radius = match &self.kind {
            MapKind::Identity | MapKind::Translation(_) => r,
            MapKind::Linear { hom, pair, .. } => r * lift_linear(hom, *pair, c.dim()).ok()?.stretch_bound(),
            MapKind::VerticalStretch(s) => {
                // f(c)^{-1} f(c h) = (h_z, s h_t + (2s - 2) Im<c_z, h_z>)
                let vertical = s.abs() * r * r + (2.0 * s - 2.0).abs() * c.z_norm() * r;
                (r.powi(4) + vertical * vertical).powf(0.25)
            }
            MapKind::Compose(maps) => {
                let mut b = ball.clone();
                for m in maps {
                    b = m.image_bound(&b)?;
                }
                return Some(b);
            }
            MapKind::BlowUp {
                base,
                at,
                image_at,
                scale,
            } => {
                let moved = Ball::new(
                    multiply(at, &dilate_unchecked(*scale, c)).ok()?,
                    scale * r,
                    MetricKind::Koranyi,
                )
                .ok()?;
                let outer = base.image_bound(&moved)?;
                let center = dilate(1.0 / scale, &multiply(&inverse(image_at), outer.center()).ok()?).ok()?;
                return Ball::new(center, outer.radius() / scale, MetricKind::Koranyi).ok();
            }
            MapKind::QuadraticShear(_) | MapKind::Custom(_) => return None,
        };
        Ball::new(fc, radius * (1.0 + 1e-12), MetricKind::Koranyi).ok()
    }

    pub fn inverse_map(&self) -> Result<MapDescriptor> {
        if !self.has_inverse() {
            return Err(HqcError::MissingInverse { map: self.name() });
        }
        let me = self.clone();
        let me2 = self.clone();
        Ok(MapDescriptor::custom(CustomMap {
            name: format!("inverse({})", self.name()),
            forward: Box::new(move |p| me.inverse_eval(p).expect("inverse evaluator")),
            inverse: Some(Box::new(move |p| me2.forward(p).expect("forward evaluator"))),
            group_compatible: self.is_group_compatible(),
            expected_qc: self.expected_qc(),
        }))
    }
}

fn linear_similarity(hom: &HomogeneousHom) -> Option<f64> {
    let sv = hom.matrix().clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if (hi - lo).abs() > 1e-12 * hi {
        return None;
    }
    if (hom.mu().abs() - hi * hi).abs() > 1e-12 * hi * hi {
        return None;
    }
    Some(hi)
}

fn lift_linear(hom: &HomogeneousHom, pair: PairScope, n: usize) -> Result<HomogeneousHom> {
    if hom.dim() == n {
        return Ok(hom.clone());
    }
    if pair == PairScope::Exact || hom.dim() != 1 {
        return Err(HqcError::DimensionMismatch {
            expected: hom.dim(),
            found: n,
        });
    }
    let m = hom.matrix();
    let mut a = nalgebra::DMatrix::identity(2 * n, 2 * n);
    let pairs = if pair == PairScope::First { 1 } else { n };
    for j in 0..pairs {
        a[(j, j)] = m[(0, 0)];
        a[(j, n + j)] = m[(0, 1)];
        a[(n + j, j)] = m[(1, 0)];
        a[(n + j, n + j)] = m[(1, 1)];
    }
    HomogeneousHom::new(a, hom.mu())
}

fn shear(p: &HPoint, c: f64) -> HPoint {
    let mut z = p.z().to_vec();
    let x = z[0].re;
    z[0] = Complex64::new(x, z[0].im + c * x * x);
    HPoint::from_parts_unchecked(z, p.t() - 2.0 / 3.0 * c * x * x * x)
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(invalid(name, "must be finite"));
    }
    Ok(())
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}
