//! Correlation between random black-patch masks and the pair similarity.

use rand::Rng;
use rayon::prelude::*;

use crate::netcore::{cosine, embedding, forward, Image, ModelGraph, Tensor};
use crate::seeds::{item_rng, stage_seed};

use super::{max_normalize, AttributionError, AttributionPair};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub n_masks: usize,
    pub patches_per_mask: usize,
    /// Patch side at `reference_side`; scaled to the actual image side.
    pub patch_size: usize,
    pub reference_side: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            n_masks: 500,
            patches_per_mask: 10,
            patch_size: 30,
            reference_side: 112,
        }
    }
}

impl MaskConfig {
    /// Patch side in pixels for an `h×w` image: `round(patch · min(h, w) / reference)`, at least 1.
    pub fn effective_patch(&self, h: usize, w: usize) -> usize {
        let side = h.min(w) as f64;
        ((self.patch_size as f64 * side / self.reference_side as f64).round() as usize).max(1)
    }

    pub fn validate(&self, h: usize, w: usize) -> Result<(), AttributionError> {
        if self.n_masks < 2 {
            return Err(AttributionError::TooFewMasks(self.n_masks));
        }
        if self.patches_per_mask == 0 || self.patch_size == 0 || self.reference_side == 0 {
            return Err(AttributionError::Config(format!("mask counts and sizes must be >= 1: {self:?}")));
        }
        let p = self.effective_patch(h, w);
        if p > h || p > w {
            return Err(AttributionError::Config(format!("patch {p} does not fit a {h}×{w} image")));
        }
        Ok(())
    }
}

/// `n_masks` keep-masks (`true` = pixel kept), mask `j` drawn from stream `j` of `seed`.
pub fn generate_masks(h: usize, w: usize, cfg: &MaskConfig, seed: u64) -> Result<Vec<Vec<bool>>, AttributionError> {
    cfg.validate(h, w)?;
    let p = cfg.effective_patch(h, w);
    Ok((0..cfg.n_masks)
        .map(|j| {
            let mut rng = item_rng(seed, j as u64);
            let mut mask = vec![true; h * w];
            for _ in 0..cfg.patches_per_mask {
                let y0 = rng.random_range(0..=h - p);
                let x0 = rng.random_range(0..=w - p);
                for y in y0..y0 + p {
                    mask[y * w + x0..y * w + x0 + p].fill(false);
                }
            }
            mask
        })
        .collect())
}

/// Per-pixel Pearson correlation between mask value (0/1) and score.
/// Pixels (or score lists) without variance get 0.
pub fn pearson_map(masks: &[Vec<bool>], scores: &[f64]) -> Result<Vec<f64>, AttributionError> {
    if masks.len() != scores.len() {
        return Err(AttributionError::Dimensions(format!(
            "{} masks vs {} scores",
            masks.len(),
            scores.len()
        )));
    }
    if masks.len() < 2 {
        return Err(AttributionError::TooFewMasks(masks.len()));
    }
    let n = masks.len() as f64;
    let px = masks[0].len();
    if masks.iter().any(|m| m.len() != px) {
        return Err(AttributionError::Dimensions("masks differ in size".into()));
    }
    let s_mean = scores.iter().sum::<f64>() / n;
    let s_dev: Vec<f64> = scores.iter().map(|s| s - s_mean).collect();
    let s_ss: f64 = s_dev.iter().map(|d| d * d).sum();
    Ok((0..px)
        .map(|i| {
            let kept = masks.iter().filter(|m| m[i]).count() as f64;
            let m_mean = kept / n;
            let (mut cov, mut m_ss) = (0.0, 0.0);
            for (m, d) in masks.iter().zip(&s_dev) {
                let md = if m[i] { 1.0 } else { 0.0 } - m_mean;
                cov += md * d;
                m_ss += md * md;
            }
            if m_ss == 0.0 || s_ss == 0.0 {
                0.0
            } else {
                (cov / (m_ss * s_ss).sqrt()).clamp(-1.0, 1.0)
            }
        })
        .collect())
}

fn split_signs(corr: &[f64], h: usize, w: usize) -> Result<AttributionPair, AttributionError> {
    let pos = Tensor::new(vec![h, w], corr.iter().map(|r| r.max(0.0)).collect())?;
    let neg = Tensor::new(vec![h, w], corr.iter().map(|r| (-r).max(0.0)).collect())?;
    Ok(AttributionPair {
        plus: max_normalize(&pos)?.map,
        minus: max_normalize(&neg)?.map,
    })
}

/// Masks `target` with each mask, scores it against a frozen embedding and
/// correlates.
pub fn corr_rise_with_masks(
    model: &ModelGraph,
    target: &Image,
    frozen_embedding: &Tensor,
    masks: &[Vec<bool>],
) -> Result<AttributionPair, AttributionError> {
    let [c, h, w] = target.dims();
    if masks.iter().any(|m| m.len() != h * w) {
        return Err(AttributionError::Dimensions(format!("masks must cover {h}×{w} pixels")));
    }
    if masks.len() < 2 {
        return Err(AttributionError::TooFewMasks(masks.len()));
    }
    let scores = masks
        .par_iter()
        .map(|mask| {
            let mut v = target.values().to_vec();
            for ch in 0..c {
                for (px, &keep) in v[ch * h * w..(ch + 1) * h * w].iter_mut().zip(mask) {
                    if !keep {
                        *px = 0.0;
                    }
                }
            }
            let masked = Image::new(c, h, w, v)?;
            let trace = forward(model, &masked)?;
            Ok(cosine(frozen_embedding, embedding(&trace, model)?)?)
        })
        .collect::<Result<Vec<f64>, AttributionError>>()?;
    split_signs(&pearson_map(masks, &scores)?, h, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrRiseMaps {
    pub gallery: AttributionPair,
    pub probe: AttributionPair,
}

/// Both sides of a pair, each masked separately with its own mask set.
pub fn corr_rise(
    model: &ModelGraph,
    gallery: &Image,
    probe: &Image,
    cfg: &MaskConfig,
    seed: u64,
) -> Result<CorrRiseMaps, AttributionError> {
    if gallery.dims() != probe.dims() {
        return Err(AttributionError::Dimensions(format!(
            "gallery {:?} vs probe {:?}",
            gallery.dims(),
            probe.dims()
        )));
    }
    let [_, h, w] = gallery.dims();
    let g_emb = embedding(&forward(model, gallery)?, model)?.clone();
    let p_emb = embedding(&forward(model, probe)?, model)?.clone();
    let g_masks = generate_masks(h, w, cfg, stage_seed(seed, "corr_rise/gallery"))?;
    let p_masks = generate_masks(h, w, cfg, stage_seed(seed, "corr_rise/probe"))?;
    Ok(CorrRiseMaps {
        gallery: corr_rise_with_masks(model, gallery, &p_emb, &g_masks)?,
        probe: corr_rise_with_masks(model, probe, &g_emb, &p_masks)?,
    })
}
