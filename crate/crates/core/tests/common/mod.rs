//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use fame_core::netcore::{forward_tensor, Head, Image, LayerSpec, LossSpec, ModelBuilder, ModelGraph, Precision, Tensor};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Distance to a non-differentiable point below which an instance is rejected.
pub const KINK_TOL: f64 = 1e-3;

pub struct Instance {
    pub model: ModelGraph,
    pub spec: LossSpec,
    pub image: Image,
}

fn random_conv(rng: &mut ChaCha8Rng, in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize) -> LayerSpec {
    let scale = 1.0 / ((in_c * k * k) as f64).sqrt();
    LayerSpec::Conv2d {
        weight: Tensor::new(
            vec![out_c, in_c, k, k],
            (0..out_c * in_c * k * k).map(|_| rng.random_range(-1.5..1.5) * scale).collect(),
        )
        .unwrap(),
        bias: Tensor::new(vec![out_c], (0..out_c).map(|_| rng.random_range(-0.3..0.3)).collect()).unwrap(),
        stride,
        padding,
    }
}

fn random_linear(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> LayerSpec {
    let scale = 1.0 / (in_dim as f64).sqrt();
    LayerSpec::Linear {
        weight: Tensor::new(
            vec![out_dim, in_dim],
            (0..out_dim * in_dim).map(|_| rng.random_range(-1.5..1.5) * scale).collect(),
        )
        .unwrap(),
        bias: Tensor::new(vec![out_dim], (0..out_dim).map(|_| rng.random_range(-0.3..0.3)).collect()).unwrap(),
    }
}

/// Random small CNN with a random loss. Max-pooling is placed before the ReLU
/// so pooled windows do not tie at exactly zero. `None` if the sampled shapes
/// do not fit.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Option<Instance> {
    let c = if rng.random_bool(0.5) { 1 } else { 3 };
    let h = rng.random_range(5..=9usize);
    let w = rng.random_range(5..=9usize);
    let out1 = rng.random_range(2..=4usize);
    let k = rng.random_range(1..=3usize);
    let stride = rng.random_range(1..=2usize);
    let padding = rng.random_range(0..=1usize);
    let mut b = ModelBuilder::new([c, h, w], 0).layer(random_conv(rng, c, out1, k, stride, padding));
    let (mut fh, mut fw) = ((h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1);
    if rng.random_bool(0.5) && fh >= 2 && fw >= 2 {
        b = b.maxpool(2, 2);
        (fh, fw) = ((fh - 2) / 2 + 1, (fw - 2) / 2 + 1);
    }
    b = b.relu();
    let mut fc = out1;
    if rng.random_bool(0.5) {
        let out2 = rng.random_range(2..=4usize);
        let k2 = rng.random_range(1..=2usize).min(fh).min(fw);
        b = b.layer(random_conv(rng, out1, out2, k2, 1, 0)).relu();
        (fh, fw, fc) = (fh - k2 + 1, fw - k2 + 1, out2);
    }
    b = b.mark_feature();
    let flat = if rng.random_bool(0.5) {
        b = b.global_avgpool();
        fc
    } else {
        b = b.flatten();
        fc * fh * fw
    };
    let out = rng.random_range(2..=5usize);
    b = b.layer(random_linear(rng, flat, out));
    if rng.random_bool(0.3) {
        let out2 = rng.random_range(2..=5usize);
        b = b.relu().layer(random_linear(rng, out, out2));
        return finish(rng, b, out2, [c, h, w], (fh, fw));
    }
    finish(rng, b, out, [c, h, w], (fh, fw))
}

fn finish(
    rng: &mut ChaCha8Rng,
    b: ModelBuilder,
    out: usize,
    [c, h, w]: [usize; 3],
    (fh, fw): (usize, usize),
) -> Option<Instance> {
    let classify = rng.random_bool(0.5);
    let head = if classify {
        Head::Classification { classes: out }
    } else {
        Head::Embedding { dim: out }
    };
    let model = b.build(head, Precision::F64).ok()?;
    let spec = match (classify, rng.random_range(0..3)) {
        (_, 0) => LossSpec::FeatureZero {
            row: rng.random_range(0..fh),
            col: rng.random_range(0..fw),
        },
        (true, _) => LossSpec::ClassLogit {
            class: rng.random_range(0..out),
        },
        (false, j) => {
            let g = Tensor::new(vec![out], (0..out).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            if j == 1 {
                LossSpec::SimilarityPlus { gallery_embedding: g }
            } else {
                LossSpec::SimilarityMinus { gallery_embedding: g }
            }
        }
    };
    let image = Image::new(c, h, w, (0..c * h * w).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
    Some(Instance { model, spec, image })
}

/// True when no ReLU input, max-pool top-2 gap or non-zero FeatureZero
/// component lies within [`KINK_TOL`] of a kink.
pub fn kink_free(model: &ModelGraph, x: &Tensor, spec: &LossSpec) -> bool {
    let trace = forward_tensor(model, x).unwrap();
    for (i, layer) in model.layers().iter().enumerate() {
        let input = if i == 0 { x } else { trace.activation(i - 1) };
        match layer {
            LayerSpec::Relu => {
                if input.values().iter().any(|v| v.abs() <= KINK_TOL) {
                    return false;
                }
            }
            LayerSpec::MaxPool { kernel, stride } => {
                let s = input.shape();
                let (c, h, w) = (s[0], s[1], s[2]);
                let out = model.layer_shape(i);
                for ch in 0..c {
                    for oy in 0..out[1] {
                        for ox in 0..out[2] {
                            let mut win: Vec<f64> = (0..*kernel)
                                .flat_map(|dy| (0..*kernel).map(move |dx| (oy * stride + dy, ox * stride + dx)))
                                .filter(|&(y, x)| y < h && x < w)
                                .map(|(y, x)| input.values()[(ch * h + y) * w + x])
                                .collect();
                            win.sort_by(|a, b| b.total_cmp(a));
                            if win.len() >= 2 && win[0] - win[1] <= KINK_TOL {
                                return false;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    if let LossSpec::FeatureZero { row, col } = spec {
        let a = trace.activation(model.feature_layer());
        let [fc, fh, fw] = model.feature_shape();
        debug_assert_eq!(a.len(), fc * fh * fw);
        for ch in 0..fc {
            let v = a.values()[(ch * fh + row) * fw + col];
            if v != 0.0 && v.abs() <= KINK_TOL {
                return false;
            }
        }
    }
    true
}

/// The scalar whose gradient the engine returns. Similarity losses hold both
/// embedding norms at their values at `x0`.
pub fn surrogate_loss(model: &ModelGraph, x: &Tensor, x0: &Tensor, spec: &LossSpec) -> f64 {
    let trace = forward_tensor(model, x).unwrap();
    match spec {
        LossSpec::FeatureZero { row, col } => {
            let a = trace.activation(model.feature_layer());
            let [fc, fh, fw] = model.feature_shape();
            (0..fc).map(|ch| a.values()[(ch * fh + row) * fw + col].abs()).sum()
        }
        LossSpec::ClassLogit { class } => trace.output().values()[*class],
        LossSpec::SimilarityPlus { gallery_embedding } | LossSpec::SimilarityMinus { gallery_embedding } => {
            let p = trace.activation(model.embedding_layer());
            let p0_norm = forward_tensor(model, x0).unwrap().activation(model.embedding_layer()).l2_norm();
            let s = gallery_embedding.dot(p) / (gallery_embedding.l2_norm() * p0_norm);
            if matches!(spec, LossSpec::SimilarityPlus { .. }) {
                s
            } else {
                -s
            }
        }
    }
}

/// Central differences of [`surrogate_loss`] at `x0`.
pub fn fd_gradient(model: &ModelGraph, x0: &Tensor, spec: &LossSpec, h: f64) -> Vec<f64> {
    (0..x0.len())
        .map(|j| {
            let mut plus = x0.clone();
            plus.values_mut()[j] += h;
            let mut minus = x0.clone();
            minus.values_mut()[j] -= h;
            (surrogate_loss(model, &plus, x0, spec) - surrogate_loss(model, &minus, x0, spec)) / (2.0 * h)
        })
        .collect()
}

/// Largest component-wise `|a − b| / max(|a|, |b|, 1e-7)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-7))
        .fold(0.0, f64::max)
}

/// Harmonic fill of removed pixels by a dense LU solve of the 4-neighbour system.
pub fn dense_impute(image: &Image, removed: &[bool]) -> Vec<f64> {
    let [c, h, w] = image.dims();
    let unknowns: Vec<usize> = (0..h * w).filter(|&i| removed[i]).collect();
    let n = unknowns.len();
    let index_of = |i: usize| unknowns.iter().position(|&u| u == i);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = vec![DVector::<f64>::zeros(n); c];
    for (k, &i) in unknowns.iter().enumerate() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for (dy, dx) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (ny, nx) = (y + dy, x + dx);
            if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            a[(k, k)] += 1.0;
            match index_of(j) {
                Some(m) => a[(k, m)] -= 1.0,
                None => {
                    for (ch, r) in rhs.iter_mut().enumerate() {
                        r[k] += image.values()[ch * h * w + j];
                    }
                }
            }
        }
    }
    let lu = a.lu();
    let mut out = image.values().to_vec();
    for (ch, r) in rhs.iter().enumerate() {
        let u = lu.solve(r).expect("system is non-singular when a pixel is kept");
        for (k, &i) in unknowns.iter().enumerate() {
            out[ch * h * w + i] = u[k].clamp(0.0, 1.0);
        }
    }
    out
}

/// Exhaustive EER sweep: every distinct score and one value above all of
/// them, `|FAR − FRR|` minimized, ties to the lowest threshold.
/// Returns `(far, frr)` at the optimum.
pub fn eer_oracle(genuine: &[f64], impostor: &[f64]) -> (f64, f64) {
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.push(thresholds.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut best: Option<(f64, f64)> = None;
    for t in thresholds {
        let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
        if best.map_or(true, |(bf, br)| (far - frr).abs() < (bf - br).abs()) {
            best = Some((far, frr));
        }
    }
    best.unwrap()
}

/// Two-pass Pearson correlation; 0 when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// `v / max(v)` for non-negative values; zeros stay zeros.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(0.0, f64::max);
    v.iter().map(|x| if m > 0.0 { x / m } else { 0.0 }).collect()
}
