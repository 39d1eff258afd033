//! Quasiconformal distortion, the necessity construction, the Gotoh density
//! functional and the BMO transfer experiment.

mod distortion;
mod gotoh;
mod necessity;
mod search;
mod transfer;

pub use distortion::{
    distortion, lambda_max_search, qc_profile, DistortionEstimate, DistortionOptions, DistortionProfile, LambdaMax,
    LambdaOptions, ProfileOptions, QcProfile, QcVerdict,
};
pub use gotoh::{
    bridge_family, gotoh_check, gotoh_functional, gotoh_image_functional, gotoh_ladder, necessity_pair, GotohCheck,
    GotohLadder, GotohLadderRow, GotohOptions, GotohReport, GotohValue, RequiredK,
};
pub use necessity::{
    necessity_construction, reference_roundness, roundness_ladder, roundness_ratio, NecessityBudget,
    NecessityConstruction, PairwiseCheck, RoundnessEstimate, RoundnessLadder, RoundnessOptions, RoundnessVerdict,
};
pub use transfer::{bmo_transfer_experiment, TransferReport};
