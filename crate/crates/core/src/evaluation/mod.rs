//! Removal-based attribution metrics and their helpers.

mod baseline;
mod curves;
mod impute;
mod iou;
mod ranking;
mod road;

pub use baseline::{random_baseline_map, runtime_probe, sign_test, RuntimeStats, SignTest};
pub use curves::{
    apply_removal, deletion_insertion_curve, trapezoid_auc, ClassificationSet, CurveMode, CurveTask, EvalCurve,
    VerificationProtocol, DEFAULT_P_GRID,
};
pub use impute::noisy_linear_impute;
pub use iou::{binarize, iou, GroundTruthMask};
pub use ranking::{rank_pixels, removal_count, top_mask};
pub use road::{road_delete, RoadScore, DEFAULT_ROAD_NOISE};

use crate::attribution::AttributionError;
use crate::netcore::NetError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("every pixel is removed; imputation is underdetermined")]
    Underdetermined,
    #[error("no attribution map for {0}")]
    MissingMap(String),
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Net(#[from] NetError),
}
