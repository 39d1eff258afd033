use serde::{Deserialize, Serialize};

use crate::bmo::{bmo_norm_estimate, pushforward, BallFamily, BmoEstimate, BmoOptions};
use crate::error::Result;
use crate::fields::ScalarField;
use crate::maps::MapDescriptor;

/// `||u o f^{-1}|| / ||u||`, each norm estimated on its own family: the given
/// one for `u`, its image under `f` for `u o f^{-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub map: String,
    pub field: String,
    pub source: BmoEstimate,
    pub image: BmoEstimate,
    /// `None` when only the source norm is zero. Two zero norms give 1.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

pub fn bmo_transfer_experiment(
    f: &MapDescriptor,
    u: &ScalarField,
    family: &BallFamily,
    opts: &BmoOptions,
    seed: u64,
) -> Result<TransferReport> {
    let fu = pushforward(u, f)?;
    let image_family = family.image(f)?;
    let source = bmo_norm_estimate(u, family, opts, seed)?;
    let image = bmo_norm_estimate(&fu, &image_family, opts, seed)?;
    let (ratio, degenerate) = match (source.value > 0.0, image.value > 0.0) {
        (true, _) => (Some(image.value / source.value), false),
        (false, false) => (Some(1.0), true),
        (false, true) => (None, true),
    };
    Ok(TransferReport {
        map: f.name(),
        field: u.name(),
        source,
        image,
        ratio,
        degenerate,
    })
}
