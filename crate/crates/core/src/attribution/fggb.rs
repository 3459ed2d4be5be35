//! Gradient attribution of the per-dimension similarity contributions.
//!
//! `v = ĝ ⊙ p̂` sums to the cosine score. Each `v_i` is backpropagated to the
//! probe with the embedding norms held constant, the absolute gradients are
//! max-normalized individually and combined as `e = Σ (v_i − θ) e_i`; the sign
//! of `e` splits similar from dissimilar evidence.

use crate::netcore::{backward_from, embedding, forward, Image, ModelGraph, Tensor};

use super::{gaussian_blur, max_normalize, to_grayscale, AttributionError, AttributionPair, BlurConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FggbConfig {
    pub theta: f64,
}

impl FggbConfig {
    pub fn validate(&self) -> Result<(), AttributionError> {
        if !self.theta.is_finite() {
            return Err(AttributionError::Config(format!("theta must be finite, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Maps for the probe image against a gallery image.
pub fn fggb_lite(
    model: &ModelGraph,
    gallery: &Image,
    probe: &Image,
    cfg: &FggbConfig,
    blur: Option<&BlurConfig>,
) -> Result<AttributionPair, AttributionError> {
    cfg.validate()?;
    if let Some(b) = blur {
        b.validate()?;
    }
    let g = embedding(&forward(model, gallery)?, model)?.clone();
    let trace = forward(model, probe)?;
    let p = embedding(&trace, model)?.clone();
    let (ng, np) = (g.l2_norm(), p.l2_norm());
    if ng == 0.0 || np == 0.0 {
        return Err(AttributionError::ZeroEmbedding);
    }
    let dim = p.len();
    let [_, h, w] = probe.dims();
    let layer = model.embedding_layer();
    let mut e = vec![0.0; h * w];
    for i in 0..dim {
        let v_i = (g.values()[i] / ng) * (p.values()[i] / np);
        let mut seed = Tensor::zeros(p.shape());
        seed.values_mut()[i] = 1.0;
        let grad = backward_from(model, &trace, layer, seed, None)?;
        let abs = Tensor::new(grad.shape().to_vec(), grad.values().iter().map(|v| v.abs()).collect())?;
        let e_i = max_normalize(&to_grayscale(&abs)?)?.map;
        let weight = v_i - cfg.theta;
        for (acc, &m) in e.iter_mut().zip(e_i.values()) {
            *acc += weight * m;
        }
    }
    let part = |sign: f64| -> Result<_, AttributionError> {
        let mut t = Tensor::new(vec![h, w], e.iter().map(|v| (sign * v).max(0.0)).collect())?;
        if let Some(b) = blur {
            t = gaussian_blur(&t, b)?;
        }
        Ok(max_normalize(&t)?.map)
    };
    Ok(AttributionPair {
        plus: part(1.0)?,
        minus: part(-1.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{Head, LayerSpec, ModelBuilder, Precision};

    /// `φ(x) = W x` on a 1×2×2 input with a 2-dim embedding.
    fn linear_embedder(w: &[f64; 8]) -> ModelGraph {
        ModelBuilder::new([1, 2, 2], 0)
            .layer(LayerSpec::Conv2d {
                weight: Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
                bias: Tensor::new(vec![1], vec![0.0]).unwrap(),
                stride: 1,
                padding: 0,
            })
            .mark_feature()
            .flatten()
            .layer(LayerSpec::Linear {
                weight: Tensor::new(vec![2, 4], w.to_vec()).unwrap(),
                bias: Tensor::new(vec![2], vec![0.0; 2]).unwrap(),
            })
            .mark_embedding()
            .build(Head::Embedding { dim: 2 }, Precision::F64)
            .unwrap()
    }

    #[test]
    fn hand_computed_combination() {
        let w = [1.0, 0.5, 0.0, 0.25, -0.2, 0.0, 0.4, 0.8];
        let model = linear_embedder(&w);
        let gal = Image::new(1, 2, 2, vec![0.9, 0.1, 0.1, 0.1]).unwrap();
        let pro = Image::new(1, 2, 2, vec![0.2, 0.3, 0.9, 0.6]).unwrap();
        let emb = |x: &Image| -> [f64; 2] {
            let v = x.values();
            let a = (0..4).map(|j| w[j] * v[j]).sum::<f64>();
            let b = (0..4).map(|j| w[4 + j] * v[j]).sum::<f64>();
            [a, b]
        };
        let (g, p) = (emb(&gal), emb(&pro));
        let (ng, np) = ((g[0] * g[0] + g[1] * g[1]).sqrt(), (p[0] * p[0] + p[1] * p[1]).sqrt());
        let theta = 0.1;
        let e1 = [1.0, 0.5, 0.0, 0.25];
        let e2 = [0.25, 0.0, 0.5, 1.0];
        let v = [g[0] * p[0] / (ng * np), g[1] * p[1] / (ng * np)];
        let e: Vec<f64> = (0..4).map(|j| (v[0] - theta) * e1[j] + (v[1] - theta) * e2[j]).collect();
        let max_pos = e.iter().cloned().fold(0.0, f64::max);
        let max_neg = e.iter().map(|x| -x).fold(0.0, f64::max);
        let out = fggb_lite(&model, &gal, &pro, &FggbConfig { theta }, None).unwrap();
        for j in 0..4 {
            let plus = if max_pos > 0.0 { e[j].max(0.0) / max_pos } else { 0.0 };
            let minus = if max_neg > 0.0 { (-e[j]).max(0.0) / max_neg } else { 0.0 };
            assert!((out.plus.values()[j] - plus).abs() < 1e-12);
            assert!((out.minus.values()[j] - minus).abs() < 1e-12);
        }
    }

    #[test]
    fn very_low_theta_leaves_no_dissimilar_evidence() {
        let model = linear_embedder(&[1.0, 0.5, 0.0, 0.25, -0.2, 0.0, 0.4, 0.8]);
        let gal = Image::new(1, 2, 2, vec![0.9, 0.1, 0.1, 0.1]).unwrap();
        let pro = Image::new(1, 2, 2, vec![0.2, 0.3, 0.9, 0.6]).unwrap();
        let out = fggb_lite(&model, &gal, &pro, &FggbConfig { theta: -1e6 }, None).unwrap();
        assert!(out.minus.is_all_zero());
        assert!(!out.plus.is_all_zero());
    }

    #[test]
    fn zero_embedding_and_bad_theta_error() {
        let model = linear_embedder(&[1.0; 8]);
        let zero = Image::zeros(1, 2, 2);
        let x = Image::new(1, 2, 2, vec![0.5; 4]).unwrap();
        assert!(matches!(
            fggb_lite(&model, &zero, &x, &FggbConfig { theta: 0.0 }, None),
            Err(AttributionError::ZeroEmbedding)
        ));
        assert!(fggb_lite(&model, &x, &x, &FggbConfig { theta: f64::NAN }, None).is_err());
    }
}
