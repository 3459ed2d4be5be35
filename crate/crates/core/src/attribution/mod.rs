//! LOTS, FAME maps and the baseline attribution methods.

mod cam;
mod corr_rise;
mod fame;
mod fggb;
mod lots;
mod map;

pub use cam::{bilinear_upsample, grad_cam, grad_cam_ew};
pub use corr_rise::{corr_rise, corr_rise_with_masks, generate_masks, pearson_map, CorrRiseMaps, MaskConfig};
pub use fame::{fame, fame_feature_sweep, fame_pair, feature_cell, receptive_mass_fraction, FameResult, PairSide};
pub use fggb::{fggb_lite, FggbConfig};
pub use lots::{lots_iterate, EarlyStop, LotsConfig, LotsOutcome, Termination};
pub use map::{
    gaussian_blur, max_normalize, perturbation_map, reflect_index, to_grayscale, AttributionMap, AttributionPair,
    BlurConfig, Normalized,
};

use crate::netcore::NetError;

#[derive(Debug, thiserror::Error)]
pub enum AttributionError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid attribution map: {0}")]
    InvalidMap(String),
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("loss {0} is not supported by this method")]
    UnsupportedSpec(&'static str),
    #[error("need at least 2 masks, got {0}")]
    TooFewMasks(usize),
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("attribution map has zero total mass")]
    ZeroMass,
    #[error(transparent)]
    Net(#[from] NetError),
}
