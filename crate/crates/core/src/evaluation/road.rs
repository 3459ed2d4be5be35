//! Confidence drop after removing top-ranked pixels with noisy linear imputation.

use crate::attribution::AttributionMap;
use crate::netcore::{forward, Head, Image, ModelGraph};
use crate::training::softmax_probs;

use super::{noisy_linear_impute, top_mask, EvalError};

pub const DEFAULT_ROAD_NOISE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadScore {
    /// Clean minus imputed true-class softmax probability.
    pub prob_drop: f64,
    /// Clean minus imputed true-class logit.
    pub logit_drop: f64,
}

fn class_outputs(model: &ModelGraph, image: &Image, class: usize) -> Result<(f64, f64), EvalError> {
    let trace = forward(model, image)?;
    let logits = trace.output();
    Ok((softmax_probs(logits)[class], logits.values()[class]))
}

pub fn road_delete(
    model: &ModelGraph,
    image: &Image,
    map: &AttributionMap,
    p_percent: f64,
    true_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<RoadScore, EvalError> {
    match model.head() {
        Head::Classification { classes } if true_class < classes => {}
        h => {
            return Err(EvalError::Config(format!(
                "ROAD needs a classification head covering class {true_class}, got {h:?}"
            )))
        }
    }
    let [_, h, w] = image.dims();
    if map.dims() != (h, w) {
        return Err(EvalError::Dimensions(format!("map {:?} vs image {h}×{w}", map.dims())));
    }
    let removed = top_mask(map, p_percent)?;
    let (p0, z0) = class_outputs(model, image, true_class)?;
    let imputed = noisy_linear_impute(image, &removed, noise_sigma, seed)?;
    let (p1, z1) = class_outputs(model, &imputed, true_class)?;
    Ok(RoadScore {
        prob_drop: p0 - p1,
        logit_drop: z0 - z1,
    })
}
