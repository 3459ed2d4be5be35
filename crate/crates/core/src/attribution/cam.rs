//! Gradient-weighted class activation maps on the feature layer.

use crate::netcore::{extract_feature_map, forward, gradient_at_layer, Image, LossSpec, ModelGraph, Tensor};

use super::{max_normalize, AttributionError, AttributionMap};

/// Bilinear resize of an `H×W` grid with half-pixel centers and edge clamping.
pub fn bilinear_upsample(src: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor, AttributionError> {
    let (h, w) = match src.shape() {
        [h, w] => (*h, *w),
        s => return Err(AttributionError::Dimensions(format!("expected an H×W grid, got {s:?}"))),
    };
    if out_h == 0 || out_w == 0 {
        return Err(AttributionError::Dimensions("output size must be non-zero".into()));
    }
    let axis = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let pos = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let v = src.values();
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let (y0, y1, fy) = axis(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = axis(ox, w, out_w);
            let top = v[y0 * w + x0] * (1.0 - fx) + v[y0 * w + x1] * fx;
            let bottom = v[y1 * w + x0] * (1.0 - fx) + v[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(Tensor::new(vec![out_h, out_w], out)?)
}

/// Feature activation and the gradient of the target w.r.t. it.
fn activation_and_gradient(
    model: &ModelGraph,
    image: &Image,
    spec: &LossSpec,
) -> Result<(Tensor, Tensor), AttributionError> {
    match spec {
        LossSpec::ClassLogit { .. } | LossSpec::SimilarityPlus { .. } => {}
        other => return Err(AttributionError::UnsupportedSpec(other.name())),
    }
    let trace = forward(model, image)?;
    let a = extract_feature_map(&trace, model)?.clone();
    let g = gradient_at_layer(model, &trace, spec, model.feature_layer())?;
    Ok((a, g))
}

fn finish(model: &ModelGraph, cam: Tensor) -> Result<AttributionMap, AttributionError> {
    let coarse = max_normalize(&cam)?;
    let [_, h, w] = model.input_shape();
    let up = bilinear_upsample(&coarse.map.to_tensor(), h, w)?;
    Ok(max_normalize(&up)?.map)
}

/// `ReLU(Σ_c w_c a_c)` with `w_c` the spatial mean of `∂target/∂a_c`.
///
/// Supports `ClassLogit` and `SimilarityPlus`; for the latter the target is
/// `gᵀp` up to the constant cosine normalizers, which max-normalization removes.
pub fn grad_cam(model: &ModelGraph, image: &Image, spec: &LossSpec) -> Result<AttributionMap, AttributionError> {
    let (a, g) = activation_and_gradient(model, image, spec)?;
    let [c_a, h, w] = model.feature_shape();
    let area = h * w;
    let mut cam = vec![0.0; area];
    for c in 0..c_a {
        let gc = &g.values()[c * area..(c + 1) * area];
        let ac = &a.values()[c * area..(c + 1) * area];
        let weight = gc.iter().sum::<f64>() / area as f64;
        for (o, &av) in cam.iter_mut().zip(ac) {
            *o += weight * av;
        }
    }
    for v in &mut cam {
        *v = v.max(0.0);
    }
    finish(model, Tensor::new(vec![h, w], cam)?)
}

/// Element-wise variant: `Σ_c ReLU(a_c ⊙ ∂target/∂a_c)`.
pub fn grad_cam_ew(model: &ModelGraph, image: &Image, spec: &LossSpec) -> Result<AttributionMap, AttributionError> {
    let (a, g) = activation_and_gradient(model, image, spec)?;
    let [c_a, h, w] = model.feature_shape();
    let area = h * w;
    let mut cam = vec![0.0; area];
    for c in 0..c_a {
        for i in 0..area {
            let idx = c * area + i;
            cam[i] += (a.values()[idx] * g.values()[idx]).max(0.0);
        }
    }
    finish(model, Tensor::new(vec![h, w], cam)?)
}
