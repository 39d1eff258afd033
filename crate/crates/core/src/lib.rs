//! Numerics on the Heisenberg group: exact group arithmetic, Koranyi and
//! Carnot-Caratheodory metrics, Haar-measure Monte Carlo, BMO norms and
//! quasiconformal distortion experiments.

pub mod bmo;
pub mod error;
pub mod fields;
pub mod group;
pub mod maps;
pub mod measure;
pub mod metrics;
pub mod pansu;
pub mod qc;
pub mod rng;
pub mod stats;

pub use error::{HqcError, Result};
pub use group::{
    dilate, hom_apply, increment, inverse, left_translate, multiply, validate_homomorphism, GroupParams,
    HPoint, HomValidation, HomogeneousHom, ValidatedHom,
};
pub use maps::{CustomMap, MapDescriptor, MapSpec};
pub use metrics::{koranyi_distance, koranyi_norm, Ball, BoundSide, MetricKind};
