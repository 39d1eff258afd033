//! Scalar functions on `H^n`: the catalog used by the integration and BMO
//! estimators, their pushforwards by maps, and user closures.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, HqcError, Result};
use crate::group::HPoint;
use crate::maps::MapDescriptor;
use crate::metrics::koranyi_distance;

/// Serializable catalog entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `amplitude * sin(frequency * x_1 + phase)`.
    BoundedSinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Indicator of `{coords[coord] > offset}`; `coord` defaults to `t`.
    IndicatorHalfspace {
        #[serde(default)]
        coord: Option<usize>,
        #[serde(default)]
        offset: f64,
    },
    /// `log d_K(x, center)`, singular at the center.
    LogKoranyi {
        #[serde(default)]
        center: Option<HPoint>,
    },
    /// `d_K(x, center)`; not in BMO.
    KoranyiDistance {
        #[serde(default)]
        center: Option<HPoint>,
    },
    /// One coordinate of the layout `[x.., y.., t]`.
    Coordinate {
        index: usize,
    },
    /// `|z|^2`.
    ZNormSquared,
    /// `constant + sum weight * term`.
    Affine {
        #[serde(default)]
        constant: f64,
        terms: Vec<AffineTerm>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineTerm {
    pub weight: f64,
    pub field: FieldSpec,
}

impl FieldSpec {
    pub fn catalog_ids() -> &'static [(&'static str, &'static str)] {
        &[
            ("constant", "u = value"),
            ("bounded-sinusoid", "u = amplitude sin(frequency x_1 + phase)"),
            ("indicator-halfspace", "u = 1{coords[coord] > offset}; coord defaults to t"),
            ("log-koranyi", "u = log d_K(x, center); center defaults to 0"),
            ("koranyi-distance", "u = d_K(x, center); not BMO"),
            ("coordinate", "u = coords[index] in the layout [x.., y.., t]"),
            ("z-norm-squared", "u = |z|^2"),
            ("affine", "u = constant + sum weight * field"),
        ]
    }

    fn eval(&self, p: &HPoint) -> Result<f64> {
        let origin = || HPoint::identity(p.dim());
        Ok(match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::BoundedSinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * p.z()[0].re + phase).sin(),
            FieldSpec::IndicatorHalfspace { coord, offset } => {
                let v = match coord {
                    None => p.t(),
                    Some(i) => *p
                        .coords()
                        .get(*i)
                        .ok_or_else(|| invalid("coord", format!("index {i} out of range")))?,
                };
                if v > *offset {
                    1.0
                } else {
                    0.0
                }
            }
            FieldSpec::LogKoranyi { center } => {
                koranyi_distance(p, center.as_ref().unwrap_or(&origin()))?.ln()
            }
            FieldSpec::KoranyiDistance { center } => koranyi_distance(p, center.as_ref().unwrap_or(&origin()))?,
            FieldSpec::Coordinate { index } => *p
                .coords()
                .get(*index)
                .ok_or_else(|| invalid("index", format!("index {index} out of range")))?,
            FieldSpec::ZNormSquared => p.z().iter().map(|c| c.norm_sqr()).sum(),
            FieldSpec::Affine { constant, terms } => {
                let mut acc = *constant;
                for t in terms {
                    acc += t.weight * t.field.eval(p)?;
                }
                acc
            }
        })
    }

    fn sup_abs(&self) -> Option<f64> {
        match self {
            FieldSpec::Constant { value } => Some(value.abs()),
            FieldSpec::BoundedSinusoid { amplitude, .. } => Some(amplitude.abs()),
            FieldSpec::IndicatorHalfspace { .. } => Some(1.0),
            FieldSpec::Affine { constant, terms } => terms
                .iter()
                .try_fold(constant.abs(), |acc, t| t.field.sup_abs().map(|s| acc + t.weight.abs() * s)),
            _ => None,
        }
    }

    fn expected_bmo(&self) -> Option<bool> {
        match self {
            FieldSpec::Constant { .. }
            | FieldSpec::BoundedSinusoid { .. }
            | FieldSpec::IndicatorHalfspace { .. }
            | FieldSpec::LogKoranyi { .. } => Some(true),
            FieldSpec::KoranyiDistance { .. } | FieldSpec::Coordinate { .. } | FieldSpec::ZNormSquared => Some(false),
            FieldSpec::Affine { terms, .. } => {
                let mut all = true;
                for t in terms.iter().filter(|t| t.weight != 0.0) {
                    match t.field.expected_bmo() {
                        Some(true) => {}
                        Some(false) => all = false,
                        None => return None,
                    }
                }
                // A sum with a non-BMO term could still cancel; only claim
                // membership.
                if all {
                    Some(true)
                } else {
                    None
                }
            }
        }
    }

    fn singular_points(&self, n: usize) -> Vec<HPoint> {
        match self {
            FieldSpec::LogKoranyi { center } => vec![center.clone().unwrap_or_else(|| HPoint::identity(n))],
            FieldSpec::Affine { terms, .. } => terms.iter().flat_map(|t| t.field.singular_points(n)).collect(),
            _ => Vec::new(),
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            FieldSpec::Constant { .. } => true,
            FieldSpec::Affine { terms, .. } => terms.iter().all(|t| t.weight == 0.0 || t.field.is_constant()),
            _ => false,
        }
    }

    fn name(&self) -> String {
        match self {
            FieldSpec::Constant { value } => format!("constant({value})"),
            FieldSpec::BoundedSinusoid {
                amplitude, frequency, ..
            } => format!("bounded-sinusoid({amplitude}, {frequency})"),
            FieldSpec::IndicatorHalfspace { coord, offset } => match coord {
                None => format!("indicator-halfspace(t > {offset})"),
                Some(i) => format!("indicator-halfspace(c{i} > {offset})"),
            },
            FieldSpec::LogKoranyi { .. } => "log-koranyi".into(),
            FieldSpec::KoranyiDistance { .. } => "koranyi-distance".into(),
            FieldSpec::Coordinate { index } => format!("coordinate({index})"),
            FieldSpec::ZNormSquared => "z-norm-squared".into(),
            FieldSpec::Affine { constant, terms } => {
                let parts: Vec<String> = terms.iter().map(|t| format!("{}*{}", t.weight, t.field.name())).collect();
                format!("affine({constant} + {})", parts.join(" + "))
            }
        }
    }
}

type FieldFn = dyn Fn(&HPoint) -> f64 + Send + Sync;

#[derive(Clone)]
enum FieldKind {
    Spec(FieldSpec),
    Pushforward { base: Arc<ScalarField>, map: MapDescriptor },
    Scaled { base: Arc<ScalarField>, scale: f64, shift: f64 },
    Custom { name: String, eval: Arc<FieldFn> },
}

/// An evaluable real function on `H^n`.
#[derive(Clone)]
pub struct ScalarField {
    kind: FieldKind,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.name())
    }
}

impl ScalarField {
    pub fn from_spec(spec: &FieldSpec) -> Result<Self> {
        validate(spec)?;
        Ok(Self {
            kind: FieldKind::Spec(spec.clone()),
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: FieldKind::Spec(FieldSpec::Constant { value }),
        }
    }

    pub fn log_koranyi() -> Self {
        Self {
            kind: FieldKind::Spec(FieldSpec::LogKoranyi { center: None }),
        }
    }

    pub fn koranyi_distance() -> Self {
        Self {
            kind: FieldKind::Spec(FieldSpec::KoranyiDistance { center: None }),
        }
    }

    pub fn custom(name: impl Into<String>, eval: impl Fn(&HPoint) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: FieldKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
            },
        }
    }

    /// `scale * u + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Self {
        Self {
            kind: FieldKind::Scaled {
                base: Arc::new(self.clone()),
                scale,
                shift,
            },
        }
    }

    pub fn spec(&self) -> Option<&FieldSpec> {
        match &self.kind {
            FieldKind::Spec(s) => Some(s),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FieldKind::Spec(s) => s.name(),
            FieldKind::Pushforward { base, map } => format!("{} o ({})^-1", base.name(), map.name()),
            FieldKind::Scaled { base, scale, shift } => format!("{scale}*{} + {shift}", base.name()),
            FieldKind::Custom { name, .. } => name.clone(),
        }
    }

    /// Evaluates `u(p)`; non-finite values are errors carrying the point.
    pub fn eval(&self, p: &HPoint) -> Result<f64> {
        let v = match &self.kind {
            FieldKind::Spec(s) => s.eval(p)?,
            FieldKind::Pushforward { base, map } => base.eval(&map.inverse_eval(p)?)?,
            FieldKind::Scaled { base, scale, shift } => scale * base.eval(p)? + shift,
            FieldKind::Custom { eval, .. } => eval(p),
        };
        if !v.is_finite() {
            return Err(HqcError::NonFiniteField {
                location: p.to_string(),
            });
        }
        Ok(v)
    }

    /// A bound on `sup |u|`, for bounded catalog entries.
    pub fn sup_abs(&self) -> Option<f64> {
        match &self.kind {
            FieldKind::Spec(s) => s.sup_abs(),
            FieldKind::Pushforward { base, .. } => base.sup_abs(),
            FieldKind::Scaled { base, scale, shift } => base.sup_abs().map(|s| scale.abs() * s + shift.abs()),
            FieldKind::Custom { .. } => None,
        }
    }

    /// Whether the catalog expects `u` in BMO.
    pub fn expected_bmo(&self) -> Option<bool> {
        match &self.kind {
            FieldKind::Spec(s) => s.expected_bmo(),
            FieldKind::Scaled { base, .. } => base.expected_bmo(),
            FieldKind::Pushforward { base, map } => match (base.expected_bmo(), map.expected_qc()) {
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            FieldKind::Custom { .. } => None,
        }
    }

    /// Exactly constant (so every mean oscillation is 0).
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            FieldKind::Spec(s) => s.is_constant(),
            FieldKind::Scaled { base, scale, .. } => *scale == 0.0 || base.is_constant(),
            FieldKind::Pushforward { base, .. } => base.is_constant(),
            FieldKind::Custom { .. } => false,
        }
    }

    /// Points where `u` is undefined; samplers redraw if they land on one.
    pub fn singular_points(&self, n: usize) -> Vec<HPoint> {
        match &self.kind {
            FieldKind::Spec(s) => s.singular_points(n),
            FieldKind::Scaled { base, .. } => base.singular_points(n),
            FieldKind::Pushforward { base, map } => base
                .singular_points(n)
                .iter()
                .filter_map(|p| map.forward(p).ok())
                .collect(),
            FieldKind::Custom { .. } => Vec::new(),
        }
    }

    pub(crate) fn is_singular_at(&self, p: &HPoint) -> bool {
        self.singular_points(p.dim()).iter().any(|s| s == p)
    }
}

fn validate(spec: &FieldSpec) -> Result<()> {
    let finite = |name: &'static str, v: f64| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(invalid(name, "must be finite"))
        }
    };
    match spec {
        FieldSpec::Constant { value } => finite("value", *value),
        FieldSpec::BoundedSinusoid {
            amplitude,
            frequency,
            phase,
        } => {
            finite("amplitude", *amplitude)?;
            finite("frequency", *frequency)?;
            finite("phase", *phase)
        }
        FieldSpec::IndicatorHalfspace { offset, .. } => finite("offset", *offset),
        FieldSpec::Affine { constant, terms } => {
            finite("constant", *constant)?;
            for t in terms {
                finite("weight", t.weight)?;
                validate(&t.field)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// `Fu = u o f^{-1}`.
pub fn pushforward(u: &ScalarField, f: &MapDescriptor) -> Result<ScalarField> {
    if !f.has_inverse() {
        return Err(HqcError::MissingInverse { map: f.name() });
    }
    Ok(ScalarField {
        kind: FieldKind::Pushforward {
            base: Arc::new(u.clone()),
            map: f.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::CustomMap;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    #[test]
    fn catalog_round_trips_through_toml_shapes() {
        let spec = FieldSpec::Affine {
            constant: 1.0,
            terms: vec![AffineTerm {
                weight: 2.0,
                field: FieldSpec::LogKoranyi { center: None },
            }],
        };
        let u = ScalarField::from_spec(&spec).unwrap();
        let p = HPoint::h1(1.0, 0.0, 0.0);
        assert_relative_eq!(u.eval(&p).unwrap(), 1.0);
    }

    #[test]
    fn log_koranyi_is_singular_at_the_center() {
        let u = ScalarField::log_koranyi();
        assert!(matches!(u.eval(&HPoint::identity(1)), Err(HqcError::NonFiniteField { .. })));
        assert!(u.is_singular_at(&HPoint::identity(1)));
    }

    #[test]
    fn pushforward_by_identity_is_u() {
        let u = ScalarField::koranyi_distance();
        let fu = pushforward(&u, &MapDescriptor::identity()).unwrap();
        let mut rng = stream_rng(0, 0);
        for _ in 0..100 {
            let p = HPoint::random_gaussian(1, 1.0, &mut rng);
            assert_eq!(fu.eval(&p).unwrap(), u.eval(&p).unwrap());
        }
    }

    #[test]
    fn dilation_shifts_log_koranyi() {
        let u = ScalarField::log_koranyi();
        let fu = pushforward(&u, &MapDescriptor::dilation(2.0).unwrap()).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let p = HPoint::random_gaussian(2, 1.0, &mut rng);
            assert_relative_eq!(fu.eval(&p).unwrap(), u.eval(&p).unwrap() - 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn pushforward_then_inverse_is_u() {
        let u = ScalarField::from_spec(&FieldSpec::BoundedSinusoid {
            amplitude: 1.0,
            frequency: 3.0,
            phase: 0.1,
        })
        .unwrap();
        let f = MapDescriptor::anisotropic(2.0).unwrap();
        let back = pushforward(&pushforward(&u, &f).unwrap(), &f.inverse_map().unwrap()).unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..100 {
            let p = HPoint::random_gaussian(1, 2.0, &mut rng);
            assert_relative_eq!(back.eval(&p).unwrap(), u.eval(&p).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn pushforward_needs_an_inverse() {
        let f = MapDescriptor::custom(CustomMap {
            name: "one-way".into(),
            forward: Box::new(|p| p.clone()),
            inverse: None,
            group_compatible: false,
            expected_qc: None,
        });
        assert!(matches!(
            pushforward(&ScalarField::constant(1.0), &f),
            Err(HqcError::MissingInverse { .. })
        ));
    }

    #[test]
    fn bounded_entries_report_their_sup() {
        let u = ScalarField::from_spec(&FieldSpec::BoundedSinusoid {
            amplitude: -3.0,
            frequency: 1.0,
            phase: 0.0,
        })
        .unwrap();
        assert_eq!(u.sup_abs(), Some(3.0));
        assert_eq!(ScalarField::koranyi_distance().sup_abs(), None);
        assert_eq!(ScalarField::constant(2.0).affine(-2.0, 1.0).sup_abs(), Some(5.0));
    }
}
