//! Dense tensors, a minimal CNN layer set, and exact reverse-mode gradients to
//! the input image and to any intermediate activation.

mod autodiff;
mod layer;
mod model;
mod serialize;
mod tensor;

pub use autodiff::{
    backward_from, backward_to_input, cosine, embedding, extract_feature_map, forward, forward_tensor,
    gradient_at_layer, loss_and_input_gradient, loss_value, ForwardTrace, LossSpec,
};
pub use layer::{LayerGrads, LayerSpec};
pub use model::{identity_embedder, shapes_classifier, Head, ModelBuilder, ModelGraph};
pub use serialize::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use tensor::{Image, Precision, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        detail: String,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid loss: {0}")]
    InvalidLoss(String),
    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,
    #[error("forward trace does not belong to this model")]
    TraceMismatch,
    #[error("model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
