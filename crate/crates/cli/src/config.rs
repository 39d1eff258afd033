//! Experiment configuration: one TOML document per run.

use std::path::Path;

use hqc_core::bmo::{BmoOptions, FamilySpec, JnOptions};
use hqc_core::fields::FieldSpec;
use hqc_core::metrics::{Ball, CcOptions};
use hqc_core::pansu::PansuOptions;
use hqc_core::qc::{GotohOptions, LambdaOptions, NecessityBudget, ProfileOptions, RoundnessOptions};
use hqc_core::{HPoint, MapSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Distortion,
    Bmo,
    JnTail,
    Transfer,
    Gotoh,
    Necessity,
    Roundness,
    Pansu,
    Ccdist,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Distortion => "distortion",
            ExperimentKind::Bmo => "bmo",
            ExperimentKind::JnTail => "jn-tail",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::Gotoh => "gotoh",
            ExperimentKind::Necessity => "necessity",
            ExperimentKind::Roundness => "roundness",
            ExperimentKind::Pansu => "pansu",
            ExperimentKind::Ccdist => "ccdist",
        }
    }
}

/// Top-level config. `kind` selects which of the per-kind tables is read;
/// exactly that table must be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Group dimension, `H^n`.
    pub n: usize,
    pub kind: ExperimentKind,
    /// Master seed; every estimator seed is derived from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bmo: Option<BmoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jn_tail: Option<JnTailConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gotoh: Option<GotohConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub necessity: Option<NecessityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundness: Option<RoundnessConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pansu: Option<PansuConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccdist: Option<CcdistConfig>,
}

/// `qc_profile` of one map over points x decreasing radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionConfig {
    pub map: MapSpec,
    /// Defaults to the origin.
    #[serde(default)]
    pub points: Vec<HPoint>,
    pub radii: Vec<f64>,
    #[serde(default)]
    pub options: ProfileOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmoConfig {
    pub function: FieldSpec,
    #[serde(default = "FamilySpec::lattice_default")]
    pub family: FamilySpec,
    #[serde(default)]
    pub options: BmoOptions,
}

/// BMO norm on `family`, then a tail fit on each test ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JnTailConfig {
    pub function: FieldSpec,
    #[serde(default = "FamilySpec::lattice_default")]
    pub family: FamilySpec,
    /// Explicit test balls; when empty, `random_balls` are drawn.
    #[serde(default)]
    pub balls: Vec<Ball>,
    #[serde(default = "default_random_balls")]
    pub random_balls: usize,
    #[serde(default)]
    pub bmo: BmoOptions,
    #[serde(default)]
    pub jn: JnOptions,
}

fn default_random_balls() -> usize {
    10
}

/// Ratio `||u o f^-1|| / ||u||` for every (map, function) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub maps: Vec<MapSpec>,
    pub functions: Vec<FieldSpec>,
    #[serde(default = "FamilySpec::lattice_default")]
    pub family: FamilySpec,
    #[serde(default)]
    pub options: BmoOptions,
    /// Accepted ratio interval.
    #[serde(default = "default_band")]
    pub band: [f64; 2],
}

fn default_band() -> [f64; 2] {
    [0.8, 1.25]
}

/// A set usable on either side of the Gotoh functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetSpec {
    Ball { center: HPoint, radius: f64 },
    HalfSpace { coord: usize, offset: f64 },
}

/// Either explicit/random set pairs checked against fixed families, or a
/// blow-up ladder at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GotohConfig {
    pub map: MapSpec,
    #[serde(default)]
    pub pairs: Vec<[SetSpec; 2]>,
    /// Random ball pairs in `B(0, 2)` added to `pairs`.
    #[serde(default)]
    pub random_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_family: Option<FamilySpec>,
    /// Defaults to the image of the left family for similarities and to the
    /// left family otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderConfig>,
    #[serde(default)]
    pub options: GotohOptions,
    #[serde(default)]
    pub lambda: LambdaOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<HPoint>,
    pub radii: Vec<f64>,
}

/// The necessity construction for a homomorphism at each radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NecessityConfig {
    pub map: MapSpec,
    pub radii: Vec<f64>,
    #[serde(default)]
    pub budget: NecessityBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundnessConfig {
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<HPoint>,
    pub radii: Vec<f64>,
    /// Verdict threshold as a multiple of the identity roundness.
    #[serde(default = "default_threshold_factor")]
    pub threshold_factor: f64,
    #[serde(default)]
    pub options: RoundnessOptions,
}

fn default_threshold_factor() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PansuConfig {
    pub map: MapSpec,
    #[serde(default)]
    pub points: Vec<HPoint>,
    /// `seed` inside is ignored and derived from the master seed.
    #[serde(default)]
    pub options: PansuOptions,
}

/// One CC distance (optionally on a segment ladder) and/or the empirical
/// CC/Koranyi comparison constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdistConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<HPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<HPoint>,
    /// Increasing segment counts; overrides `options.segments`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonConfig>,
    /// `seed` inside is ignored and derived from the master seed.
    #[serde(default)]
    pub options: CcOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub pairs: usize,
    #[serde(default = "default_comparison_radius")]
    pub radius: f64,
}

fn default_comparison_radius() -> f64 {
    10.0
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
            path: String::from("."),
            message: e.to_string(),
        })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    fn sections(&self) -> [(ExperimentKind, bool); 9] {
        [
            (ExperimentKind::Distortion, self.distortion.is_some()),
            (ExperimentKind::Bmo, self.bmo.is_some()),
            (ExperimentKind::JnTail, self.jn_tail.is_some()),
            (ExperimentKind::Transfer, self.transfer.is_some()),
            (ExperimentKind::Gotoh, self.gotoh.is_some()),
            (ExperimentKind::Necessity, self.necessity.is_some()),
            (ExperimentKind::Roundness, self.roundness.is_some()),
            (ExperimentKind::Pansu, self.pansu.is_some()),
            (ExperimentKind::Ccdist, self.ccdist.is_some()),
        ]
    }

    /// Structural checks serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(bad("n", "group dimension must be at least 1"));
        }
        for (kind, present) in self.sections() {
            if kind == self.kind && !present {
                return Err(bad(kind.name(), format!("kind = \"{}\" needs a [{}] table", kind.name(), kind.name())));
            }
            if kind != self.kind && present {
                return Err(bad(kind.name(), format!("table given but kind = \"{}\"", self.kind.name())));
            }
        }
        match self.kind {
            ExperimentKind::Distortion => {
                let c = self.distortion.as_ref().unwrap();
                positive_ladder("distortion.radii", &c.radii)?;
                positive("distortion.options.distortion.samples", c.options.distortion.samples)?;
            }
            ExperimentKind::Bmo => {
                let c = self.bmo.as_ref().unwrap();
                positive("bmo.options.samples_per_ball", c.options.samples_per_ball)?;
            }
            ExperimentKind::JnTail => {
                let c = self.jn_tail.as_ref().unwrap();
                positive("jn-tail.bmo.samples_per_ball", c.bmo.samples_per_ball)?;
                positive("jn-tail.jn.samples", c.jn.samples)?;
                if c.balls.is_empty() {
                    positive("jn-tail.random_balls", c.random_balls)?;
                }
            }
            ExperimentKind::Transfer => {
                let c = self.transfer.as_ref().unwrap();
                positive("transfer.options.samples_per_ball", c.options.samples_per_ball)?;
                positive("transfer.maps", c.maps.len())?;
                positive("transfer.functions", c.functions.len())?;
                if !(c.band[0] > 0.0 && c.band[0] <= c.band[1]) {
                    return Err(bad("transfer.band", "need 0 < low <= high"));
                }
            }
            ExperimentKind::Gotoh => {
                let c = self.gotoh.as_ref().unwrap();
                positive("gotoh.options.samples", c.options.samples)?;
                match &c.ladder {
                    Some(l) => {
                        positive_ladder("gotoh.ladder.radii", &l.radii)?;
                        if !c.pairs.is_empty() || c.random_pairs > 0 {
                            return Err(bad("gotoh.ladder", "a ladder run takes no set pairs"));
                        }
                    }
                    None => {
                        positive("gotoh.pairs", c.pairs.len() + c.random_pairs)?;
                    }
                }
            }
            ExperimentKind::Necessity => {
                let c = self.necessity.as_ref().unwrap();
                positive("necessity.radii", c.radii.len())?;
                if c.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    return Err(bad("necessity.radii", "radii must be positive"));
                }
                positive("necessity.budget.pair_samples", c.budget.pair_samples)?;
            }
            ExperimentKind::Roundness => {
                let c = self.roundness.as_ref().unwrap();
                positive_ladder("roundness.radii", &c.radii)?;
                positive("roundness.options.volume_samples", c.options.volume_samples)?;
            }
            ExperimentKind::Pansu => {
                let c = self.pansu.as_ref().unwrap();
                positive("pansu.options.scales", c.options.scales.len())?;
            }
            ExperimentKind::Ccdist => {
                let c = self.ccdist.as_ref().unwrap();
                if c.p.is_some() != c.q.is_some() {
                    return Err(bad("ccdist", "give both p and q"));
                }
                if c.p.is_none() && c.comparison.is_none() {
                    return Err(bad("ccdist", "need p and q, a comparison table, or both"));
                }
                positive("ccdist.options.restarts", c.options.restarts.max(1))?;
                if let Some(cmp) = &c.comparison {
                    positive("ccdist.comparison.pairs", cmp.pairs)?;
                }
            }
        }
        Ok(())
    }
}

fn bad(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(bad(path, "must be positive"));
    }
    Ok(())
}

fn positive_ladder(path: &str, radii: &[f64]) -> Result<(), CliError> {
    if radii.is_empty() {
        return Err(bad(path, "must not be empty"));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(bad(path, "radii must be positive and finite"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(bad(path, "radii must be strictly decreasing"));
    }
    Ok(())
}
