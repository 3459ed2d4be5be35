//! Synthetic datasets, SGD training and EER calibration.

mod eer;
mod identities;
mod shapes;
mod sgd;

pub use eer::{eer_threshold, EerPoint};
pub use identities::{
    gen_identities, gen_identities_with, occlusion_rows, render_identity, IdentityDataset, IdentityOptions,
    IdentityTemplate, Pair, RenderOptions, FACE_SIDE,
};
pub use sgd::{
    argmax, classifier_accuracy, cosine_separation, embed_all, pair_scores, softmax_probs, train_classifier,
    train_embedder, TrainConfig, TrainHistory, IDENTITY_LOGIT_SCALE,
};
pub use shapes::{gen_shapes, render_shape, ShapesDataset, SHAPE_CLASSES, SHAPE_SIDE};

use crate::netcore::NetError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("wrong model head: {0}")]
    Head(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },
    #[error("score list is empty")]
    EmptyScores,
    #[error(transparent)]
    Net(#[from] NetError),
}
