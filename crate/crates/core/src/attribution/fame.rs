//! Attribution from the LOTS perturbation magnitude.
//!
//! `e = max_normalize(blur(gray(|x̄ − x|)))` where `x̄` minimizes the chosen loss.

use rayon::prelude::*;

use crate::netcore::{embedding, forward, Image, LossSpec, ModelGraph};

use super::map::{gaussian_blur, max_normalize, perturbation_map, to_grayscale};
use super::{lots_iterate, AttributionError, AttributionMap, AttributionPair, BlurConfig, LotsConfig, LotsOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct FameResult {
    pub map: AttributionMap,
    /// Set when the perturbation (and therefore the map) is identically zero.
    pub all_zero: bool,
    pub lots: LotsOutcome,
}

/// FAME for one image and one loss. `blur = None` skips smoothing.
pub fn fame(
    model: &ModelGraph,
    image: &Image,
    spec: &LossSpec,
    lots_cfg: &LotsConfig,
    blur: Option<&BlurConfig>,
) -> Result<FameResult, AttributionError> {
    let lots = lots_iterate(model, image, spec, lots_cfg)?;
    let delta = perturbation_map(image, &lots.adversarial)?;
    let mut gray = to_grayscale(&delta)?;
    if let Some(cfg) = blur {
        gray = gaussian_blur(&gray, cfg)?;
    }
    let normalized = max_normalize(&gray)?;
    Ok(FameResult {
        map: normalized.map,
        all_zero: normalized.all_zero,
        lots,
    })
}

/// Which image of a verification pair is perturbed; the other one's embedding
/// stays frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSide {
    Gallery,
    Probe,
}

/// Similar (`L+ = s`) and dissimilar (`L− = 1 − s`) maps for one side of a pair.
pub fn fame_pair(
    model: &ModelGraph,
    gallery: &Image,
    probe: &Image,
    side: PairSide,
    lots_cfg: &LotsConfig,
    blur: Option<&BlurConfig>,
) -> Result<AttributionPair, AttributionError> {
    let (target, frozen) = match side {
        PairSide::Probe => (probe, gallery),
        PairSide::Gallery => (gallery, probe),
    };
    let trace = forward(model, frozen)?;
    let frozen_embedding = embedding(&trace, model)?.clone();
    let plus = fame(
        model,
        target,
        &LossSpec::SimilarityPlus {
            gallery_embedding: frozen_embedding.clone(),
        },
        lots_cfg,
        blur,
    )?;
    let minus = fame(
        model,
        target,
        &LossSpec::SimilarityMinus {
            gallery_embedding: frozen_embedding,
        },
        lots_cfg,
        blur,
    )?;
    Ok(AttributionPair {
        plus: plus.map,
        minus: minus.map,
    })
}

/// One FAME map per feature-map location `k`, in row-major order of `k`.
pub fn fame_feature_sweep(
    model: &ModelGraph,
    image: &Image,
    lots_cfg: &LotsConfig,
    blur: Option<&BlurConfig>,
) -> Result<Vec<FameResult>, AttributionError> {
    let [_, h_a, w_a] = model.feature_shape();
    (0..h_a * w_a)
        .into_par_iter()
        .map(|k| {
            let spec = LossSpec::FeatureZero {
                row: k / w_a,
                col: k % w_a,
            };
            fame(model, image, &spec, lots_cfg, blur)
        })
        .collect()
}

/// Pixel rectangle `[r0, r1) × [c0, c1)` under feature location `(row, col)`
/// when the `H_a×W_a` grid is stretched over the `H×W` image.
pub fn feature_cell(k: (usize, usize), feature_dims: (usize, usize), image_dims: (usize, usize)) -> (usize, usize, usize, usize) {
    let (row, col) = k;
    let (h_a, w_a) = feature_dims;
    let (h, w) = image_dims;
    (row * h / h_a, (row + 1) * h / h_a, col * w / w_a, (col + 1) * w / w_a)
}

/// Share of total attribution mass inside the cell of `k`.
pub fn receptive_mass_fraction(
    map: &AttributionMap,
    k: (usize, usize),
    feature_dims: (usize, usize),
    image_dims: (usize, usize),
) -> Result<f64, AttributionError> {
    let (h_a, w_a) = feature_dims;
    if map.dims() != image_dims {
        return Err(AttributionError::Dimensions(format!(
            "map {:?} vs image {:?}",
            map.dims(),
            image_dims
        )));
    }
    if h_a == 0 || w_a == 0 || h_a > image_dims.0 || w_a > image_dims.1 || k.0 >= h_a || k.1 >= w_a {
        return Err(AttributionError::Dimensions(format!(
            "location {k:?} / feature grid {feature_dims:?} inconsistent with image {image_dims:?}"
        )));
    }
    let total: f64 = map.values().iter().sum();
    if total == 0.0 {
        return Err(AttributionError::ZeroMass);
    }
    let (r0, r1, c0, c1) = feature_cell(k, feature_dims, image_dims);
    let inside: f64 = (r0..r1).map(|r| (c0..c1).map(|c| map.get(r, c)).sum::<f64>()).sum();
    Ok((inside / total).clamp(0.0, 1.0))
}
