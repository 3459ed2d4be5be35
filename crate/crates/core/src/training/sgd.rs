//! Mini-batch SGD with momentum for the classifier and the embedder.
//!
//! Per-sample gradients in a batch are computed in parallel and summed in
//! sample order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::netcore::{backward_from, cosine, forward, Head, Image, LayerGrads, ModelGraph, Tensor};
use crate::seeds::{item_rng, stage_seed};

use super::{IdentityDataset, Pair, ShapesDataset, TrainError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub momentum: f64,
    /// Upper bound of the per-sample pixel-dropout fraction; each training
    /// sample has a fraction drawn from `U(0, pixel_dropout)` of its pixels set
    /// to 0. Zero disables the augmentation.
    pub pixel_dropout: f64,
}

impl TrainConfig {
    /// Defaults tuned for the shapes classifier.
    pub fn classifier_default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 8,
            seed: 1,
            weight_decay: 1e-4,
            momentum: 0.9,
            pixel_dropout: 0.6,
        }
    }

    /// Defaults tuned for the identity embedder.
    pub fn embedder_default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 32,
            epochs: 12,
            seed: 1,
            weight_decay: 1e-4,
            momentum: 0.9,
            pixel_dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.batch_size >= 1
            && self.epochs >= 1
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..=1.0).contains(&self.pixel_dropout);
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Training accuracy after the final epoch (classification or identity head).
    pub final_accuracy: f64,
}

/// Training view of sample `index` in `epoch`, with pixel dropout applied.
fn augmented(image: &Image, cfg: &TrainConfig, epoch: usize, index: usize, n: usize) -> Image {
    if cfg.pixel_dropout == 0.0 {
        return image.clone();
    }
    let stream = (epoch * n + index) as u64;
    let mut rng = item_rng(stage_seed(cfg.seed, "pixel-dropout"), stream);
    let fraction = rng.random_range(0.0..cfg.pixel_dropout);
    let [c, h, w] = image.dims();
    let mut values = image.values().to_vec();
    for px in 0..h * w {
        if rng.random::<f64>() < fraction {
            for ch in 0..c {
                values[ch * h * w + px] = 0.0;
            }
        }
    }
    Image::new(c, h, w, values).expect("zeroing keeps values in range")
}

/// `logsumexp(z) - z[label]`; non-finite logits propagate into the loss.
fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Softmax probabilities of a logit vector.
pub fn softmax_probs(logits: &Tensor) -> Vec<f64> {
    softmax(logits.values())
}

struct SgdState {
    velocity: Vec<LayerGrads>,
}

impl SgdState {
    fn new(model: &ModelGraph) -> Self {
        Self {
            velocity: model.zero_grads(),
        }
    }

    fn step(&mut self, model: &mut ModelGraph, grads: &[LayerGrads], scale: f64, cfg: &TrainConfig) {
        let precision = model.precision();
        for ((layer, g), v) in model.layers_mut().iter_mut().zip(grads).zip(&mut self.velocity) {
            let Some((w, b)) = layer.params_mut() else { continue };
            update(w.values_mut(), &g.weight, &mut v.weight, scale, cfg, cfg.weight_decay);
            update(b.values_mut(), &g.bias, &mut v.bias, scale, cfg, 0.0);
            precision.round_slice(w.values_mut());
            precision.round_slice(b.values_mut());
        }
    }
}

fn update(p: &mut [f64], g: &[f64], v: &mut [f64], scale: f64, cfg: &TrainConfig, decay: f64) {
    for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *vi = cfg.momentum * *vi + gi * scale + decay * *pi;
        *pi -= cfg.learning_rate * *vi;
    }
}

fn sum_grads(model: &ModelGraph, parts: Vec<(f64, bool, Vec<LayerGrads>)>) -> (f64, usize, Vec<LayerGrads>) {
    let mut total = model.zero_grads();
    let mut loss = 0.0;
    let mut correct = 0;
    for (l, ok, g) in parts {
        loss += l;
        correct += ok as usize;
        for (t, gi) in total.iter_mut().zip(&g) {
            t.add_assign(gi);
        }
    }
    (loss, correct, total)
}

/// Cross-entropy SGD on the shapes classifier.
pub fn train_classifier(
    model: &ModelGraph,
    dataset: &ShapesDataset,
    cfg: &TrainConfig,
) -> Result<(ModelGraph, TrainHistory), TrainError> {
    cfg.validate()?;
    let classes = match model.head() {
        Head::Classification { classes: 4 } => 4,
        other => return Err(TrainError::Head(format!("classifier training needs 4 logits, got {other:?}"))),
    };
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = model.clone();
    let mut state = SgdState::new(&model);
    let last = model.layers().len() - 1;
    let order_seed = stage_seed(cfg.seed, "train-order");
    let mut history = TrainHistory {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        final_accuracy: 0.0,
    };
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut item_rng(order_seed, epoch as u64));
        let (mut epoch_loss, mut epoch_correct) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let parts: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let view = augmented(&dataset.images[i], cfg, epoch, i, dataset.len());
                    let trace = forward(&model, &view)?;
                    let z = trace.output().values();
                    let p = softmax(z);
                    let label = dataset.labels[i];
                    let loss = cross_entropy(z, label);
                    if !loss.is_finite() {
                        return Ok((loss, false, model.zero_grads()));
                    }
                    let predicted = argmax(z);
                    let mut grad = p;
                    grad[label] -= 1.0;
                    let grad = Tensor::new(vec![classes], grad)?;
                    let mut grads = model.zero_grads();
                    backward_from(&model, &trace, last, grad, Some(&mut grads))?;
                    Ok((loss, predicted == label, grads))
                })
                .collect::<Result<_, crate::netcore::NetError>>()?;
            let (loss, correct, grads) = sum_grads(&model, parts);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step });
            }
            epoch_loss += loss;
            epoch_correct += correct;
            state.step(&mut model, &grads, 1.0 / batch.len() as f64, cfg);
            step += 1;
        }
        history.epoch_loss.push(epoch_loss / dataset.len() as f64);
        history.final_accuracy = epoch_correct as f64 / dataset.len() as f64;
    }
    history.final_accuracy = classifier_accuracy(&model, &dataset.images, &dataset.labels)?;
    Ok((model, history))
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub fn classifier_accuracy(model: &ModelGraph, images: &[Image], labels: &[usize]) -> Result<f64, TrainError> {
    let correct = images
        .par_iter()
        .zip(labels)
        .map(|(img, &label)| Ok((argmax(forward(model, img)?.output().values()) == label) as usize))
        .collect::<Result<Vec<_>, crate::netcore::NetError>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / images.len().max(1) as f64)
}

/// Logit scale of the normalized-softmax identity head.
pub const IDENTITY_LOGIT_SCALE: f64 = 12.0;

/// Normalized-softmax identity classification on top of the embedding layer.
///
/// The identity head (one unit vector per identity, logits scaled by
/// [`IDENTITY_LOGIT_SCALE`]) is used only for training and then discarded.
pub fn train_embedder(
    model: &ModelGraph,
    dataset: &IdentityDataset,
    cfg: &TrainConfig,
) -> Result<(ModelGraph, TrainHistory), TrainError> {
    cfg.validate()?;
    let dim = match model.head() {
        Head::Embedding { dim } => dim,
        other => return Err(TrainError::Head(format!("embedder training needs an embedding head, got {other:?}"))),
    };
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n_ids = dataset.n_ids();
    let mut rng = item_rng(stage_seed(cfg.seed, "identity-head"), 0);
    let mut head: Vec<f64> = (0..n_ids * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut head_v = vec![0.0; head.len()];
    let mut model = model.clone();
    let mut state = SgdState::new(&model);
    let layer = model.embedding_layer();
    let order_seed = stage_seed(cfg.seed, "train-order");
    let mut history = TrainHistory {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        final_accuracy: 0.0,
    };
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut item_rng(order_seed, epoch as u64));
        let (mut epoch_loss, mut epoch_correct) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let head_rows = normalized_rows(&head, dim);
            let parts: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let trace = forward(&model, &dataset.images[i])?;
                    let phi = trace.activation(layer);
                    let norm = phi.l2_norm().max(1e-12);
                    let u: Vec<f64> = phi.values().iter().map(|v| v / norm).collect();
                    let logits: Vec<f64> = head_rows
                        .iter()
                        .map(|(w, _)| IDENTITY_LOGIT_SCALE * dot(w, &u))
                        .collect();
                    let mut delta = softmax(&logits);
                    let label = dataset.identity[i];
                    let loss = cross_entropy(&logits, label);
                    if !loss.is_finite() {
                        return Ok(((loss, false, model.zero_grads()), vec![0.0; n_ids * dim]));
                    }
                    let predicted = argmax(&logits);
                    delta[label] -= 1.0;
                    // d loss / d u and d loss / d head rows
                    let mut du = vec![0.0; dim];
                    let mut dhead = vec![0.0; n_ids * dim];
                    for (j, (w, wnorm)) in head_rows.iter().enumerate() {
                        let dj = IDENTITY_LOGIT_SCALE * delta[j];
                        for k in 0..dim {
                            du[k] += dj * w[k];
                        }
                        let proj = dot(w, &u);
                        for k in 0..dim {
                            dhead[j * dim + k] = dj * (u[k] - proj * w[k]) / wnorm;
                        }
                    }
                    let proj = dot(&du, &u);
                    let dphi: Vec<f64> = (0..dim).map(|k| (du[k] - proj * u[k]) / norm).collect();
                    let mut grads = model.zero_grads();
                    backward_from(&model, &trace, layer, Tensor::new(vec![dim], dphi)?, Some(&mut grads))?;
                    Ok(((loss, predicted == label, grads), dhead))
                })
                .collect::<Result<Vec<_>, crate::netcore::NetError>>()?;
            let mut dhead = vec![0.0; head.len()];
            let parts: Vec<_> = parts
                .into_iter()
                .map(|(p, dh)| {
                    for (a, b) in dhead.iter_mut().zip(&dh) {
                        *a += b;
                    }
                    p
                })
                .collect();
            let (loss, correct, grads) = sum_grads(&model, parts);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step });
            }
            epoch_loss += loss;
            epoch_correct += correct;
            let scale = 1.0 / batch.len() as f64;
            state.step(&mut model, &grads, scale, cfg);
            update(&mut head, &dhead, &mut head_v, scale, cfg, 0.0);
            step += 1;
        }
        history.epoch_loss.push(epoch_loss / dataset.len() as f64);
        history.final_accuracy = epoch_correct as f64 / dataset.len() as f64;
    }
    Ok((model, history))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized_rows(head: &[f64], dim: usize) -> Vec<(Vec<f64>, f64)> {
    head.chunks_exact(dim)
        .map(|row| {
            let n = dot(row, row).sqrt().max(1e-12);
            (row.iter().map(|v| v / n).collect(), n)
        })
        .collect()
}

/// Embeddings of every image.
pub fn embed_all(model: &ModelGraph, images: &[Image]) -> Result<Vec<Tensor>, TrainError> {
    images
        .par_iter()
        .map(|img| {
            let trace = forward(model, img)?;
            Ok(trace.activation(model.embedding_layer()).clone())
        })
        .collect::<Result<Vec<_>, crate::netcore::NetError>>()
        .map_err(TrainError::from)
}

/// Cosine score of every pair.
pub fn pair_scores(embeddings: &[Tensor], pairs: &[Pair]) -> Result<Vec<f64>, TrainError> {
    pairs
        .iter()
        .map(|p| cosine(&embeddings[p.a], &embeddings[p.b]).map_err(TrainError::from))
        .collect()
}

/// Genuine-pair mean cosine minus impostor-pair mean cosine.
pub fn cosine_separation(model: &ModelGraph, dataset: &IdentityDataset) -> Result<f64, TrainError> {
    let emb = embed_all(model, &dataset.images)?;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let g = mean(pair_scores(&emb, &dataset.genuine_pairs)?);
    let i = mean(pair_scores(&emb, &dataset.impostor_pairs)?);
    Ok(g - i)
}
