//! Layer kinds with exact forward evaluation and reverse-mode kernels.

use super::{NetError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Weight shape `[out, in, k, k]`, bias shape `[out]`. Padding is explicit zero padding.
    Conv2d {
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    /// Weight shape `[out, in]`, bias shape `[out]`.
    Linear {
        weight: Tensor,
        bias: Tensor,
    },
}

/// Parameter gradients of one layer; empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_for(layer: &LayerSpec) -> Self {
        match layer {
            LayerSpec::Conv2d { weight, bias, .. } | LayerSpec::Linear { weight, bias } => Self {
                weight: vec![0.0; weight.len()],
                bias: vec![0.0; bias.len()],
            },
            _ => Self {
                weight: Vec::new(),
                bias: Vec::new(),
            },
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrads) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

fn conv_out(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalAvgPool => "global_avgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Linear { .. } => "linear",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    /// Checks internal parameter consistency (independent of the input shape).
    pub fn validate(&self) -> Result<(), String> {
        match self {
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                ..
            } => {
                let s = weight.shape();
                if s.len() != 4 || s[2] != s[3] {
                    return Err(format!("conv2d weight must be [out, in, k, k], got {s:?}"));
                }
                if bias.shape() != [s[0]] {
                    return Err(format!("conv2d bias must be [{}], got {:?}", s[0], bias.shape()));
                }
                if *stride == 0 {
                    return Err("conv2d stride must be >= 1".into());
                }
            }
            LayerSpec::MaxPool { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err("maxpool kernel and stride must be >= 1".into());
                }
            }
            LayerSpec::Linear { weight, bias } => {
                let s = weight.shape();
                if s.len() != 2 {
                    return Err(format!("linear weight must be [out, in], got {s:?}"));
                }
                if bias.shape() != [s[0]] {
                    return Err(format!("linear bias must be [{}], got {:?}", s[0], bias.shape()));
                }
            }
            LayerSpec::Relu | LayerSpec::GlobalAvgPool | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape, or a description of the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            LayerSpec::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let s = weight.shape();
                if input.len() != 3 || input[0] != s[1] {
                    return Err(format!("conv2d expects [{}, H, W], got {input:?}", s[1]));
                }
                let h = conv_out(input[1], s[2], *stride, *padding);
                let w = conv_out(input[2], s[3], *stride, *padding);
                match (h, w) {
                    (Some(h), Some(w)) => Ok(vec![s[0], h, w]),
                    _ => Err(format!("conv2d kernel {} larger than padded input {input:?}", s[2])),
                }
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool { kernel, stride } => {
                if input.len() != 3 {
                    return Err(format!("maxpool expects rank 3, got {input:?}"));
                }
                match (conv_out(input[1], *kernel, *stride, 0), conv_out(input[2], *kernel, *stride, 0)) {
                    (Some(h), Some(w)) => Ok(vec![input[0], h, w]),
                    _ => Err(format!("maxpool kernel {kernel} larger than input {input:?}")),
                }
            }
            LayerSpec::GlobalAvgPool => {
                if input.len() != 3 {
                    return Err(format!("global_avgpool expects rank 3, got {input:?}"));
                }
                Ok(vec![input[0]])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Linear { weight, .. } => {
                let s = weight.shape();
                if input.len() != 1 || input[0] != s[1] {
                    return Err(format!("linear expects [{}], got {input:?}", s[1]));
                }
                Ok(vec![s[0]])
            }
        }
    }

    /// Evaluates the layer. The caller has already checked the input shape.
    pub(crate) fn forward(&self, input: &Tensor, out_shape: &[usize]) -> Tensor {
        match self {
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => conv_forward(input, weight, bias, *stride, *padding, out_shape),
            LayerSpec::Relu => Tensor::from_parts(
                input.shape().to_vec(),
                input.values().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            ),
            LayerSpec::MaxPool { kernel, stride } => {
                let (values, _) = maxpool(input, *kernel, *stride, out_shape);
                Tensor::from_parts(out_shape.to_vec(), values)
            }
            LayerSpec::GlobalAvgPool => {
                let s = input.shape();
                let area = s[1] * s[2];
                let values = input
                    .values()
                    .chunks_exact(area)
                    .map(|plane| plane.iter().sum::<f64>() / area as f64)
                    .collect();
                Tensor::from_parts(vec![s[0]], values)
            }
            LayerSpec::Flatten => Tensor::from_parts(out_shape.to_vec(), input.values().to_vec()),
            LayerSpec::Linear { weight, bias } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let x = input.values();
                let w = weight.values();
                let values = (0..out)
                    .map(|o| {
                        let row = &w[o * inp..(o + 1) * inp];
                        bias.values()[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                Tensor::from_parts(vec![out], values)
            }
        }
    }

    /// Reverse-mode step: given the gradient w.r.t. this layer's output, returns the
    /// gradient w.r.t. its input and, when `grads` is provided, accumulates parameter
    /// gradients into it.
    pub(crate) fn backward(
        &self,
        input: &Tensor,
        grad_out: &Tensor,
        grads: Option<&mut LayerGrads>,
    ) -> Tensor {
        match self {
            LayerSpec::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => conv_backward(input, weight, *stride, *padding, grad_out, grads),
            LayerSpec::Relu => Tensor::from_parts(
                input.shape().to_vec(),
                input
                    .values()
                    .iter()
                    .zip(grad_out.values())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
            ),
            LayerSpec::MaxPool { kernel, stride } => {
                let (_, argmax) = maxpool(input, *kernel, *stride, grad_out.shape());
                let mut grad_in = vec![0.0; input.len()];
                for (&src, &g) in argmax.iter().zip(grad_out.values()) {
                    grad_in[src] += g;
                }
                Tensor::from_parts(input.shape().to_vec(), grad_in)
            }
            LayerSpec::GlobalAvgPool => {
                let s = input.shape();
                let area = s[1] * s[2];
                let mut grad_in = Vec::with_capacity(input.len());
                for &g in grad_out.values() {
                    grad_in.extend(std::iter::repeat_n(g / area as f64, area));
                }
                Tensor::from_parts(s.to_vec(), grad_in)
            }
            LayerSpec::Flatten => Tensor::from_parts(input.shape().to_vec(), grad_out.values().to_vec()),
            LayerSpec::Linear { weight, .. } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let w = weight.values();
                let g = grad_out.values();
                let mut grad_in = vec![0.0; inp];
                for o in 0..out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    for (gi, wi) in grad_in.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                        *gi += go * wi;
                    }
                }
                if let Some(grads) = grads {
                    let x = input.values();
                    for o in 0..out {
                        let go = g[o];
                        grads.bias[o] += go;
                        for (gw, xi) in grads.weight[o * inp..(o + 1) * inp].iter_mut().zip(x) {
                            *gw += go * xi;
                        }
                    }
                }
                Tensor::from_parts(vec![inp], grad_in)
            }
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            LayerSpec::Conv2d { weight, bias, .. } | LayerSpec::Linear { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            LayerSpec::Conv2d { weight, bias, .. } | LayerSpec::Linear { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }
}

/// Valid output range `[lo, hi)` of positions `o` with `o*stride + k - padding` inside `[0, len)`.
#[inline]
fn valid_range(out_len: usize, len: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    // o*stride + k >= padding
    let lo = if k >= padding {
        0
    } else {
        (padding - k).div_ceil(stride)
    };
    // o*stride + k - padding <= len - 1
    let hi = if len + padding < k + 1 {
        0
    } else {
        ((len + padding - k - 1) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

fn conv_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    out_shape: &[usize],
) -> Tensor {
    let ws = weight.shape();
    let (out_c, in_c, k) = (ws[0], ws[1], ws[2]);
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let x = input.values();
    let wv = weight.values();
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias.values()[o]);
        for c in 0..in_c {
            let xin = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                let (y_lo, y_hi) = valid_range(oh, h, ky, stride, padding);
                for kx in 0..k {
                    let wt = wv[((o * in_c + c) * k + ky) * k + kx];
                    if wt == 0.0 {
                        continue;
                    }
                    let (x_lo, x_hi) = valid_range(ow, w, kx, stride, padding);
                    for oy in y_lo..y_hi {
                        let iy = oy * stride + ky - padding;
                        let row_in = &xin[iy * w..(iy + 1) * w];
                        let row_out = &mut plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let ix0 = x_lo + kx - padding;
                            let n = x_hi - x_lo;
                            for (ro, ri) in row_out[x_lo..x_hi].iter_mut().zip(&row_in[ix0..ix0 + n]) {
                                *ro += wt * ri;
                            }
                        } else {
                            for ox in x_lo..x_hi {
                                row_out[ox] += wt * row_in[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(out_shape.to_vec(), out)
}

fn conv_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
    mut grads: Option<&mut LayerGrads>,
) -> Tensor {
    let ws = weight.shape();
    let (out_c, in_c, k) = (ws[0], ws[1], ws[2]);
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
    let x = input.values();
    let wv = weight.values();
    let g = grad_out.values();
    let mut grad_in = vec![0.0; input.len()];
    for o in 0..out_c {
        let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
        if let Some(grads) = grads.as_deref_mut() {
            grads.bias[o] += gplane.iter().sum::<f64>();
        }
        for c in 0..in_c {
            let xin = &x[c * h * w..(c + 1) * h * w];
            let gin = &mut grad_in[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                let (y_lo, y_hi) = valid_range(oh, h, ky, stride, padding);
                for kx in 0..k {
                    let widx = ((o * in_c + c) * k + ky) * k + kx;
                    let wt = wv[widx];
                    let (x_lo, x_hi) = valid_range(ow, w, kx, stride, padding);
                    let mut wgrad = 0.0;
                    for oy in y_lo..y_hi {
                        let iy = oy * stride + ky - padding;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let ix0 = x_lo + kx - padding;
                            let n = x_hi - x_lo;
                            let gseg = &grow[x_lo..x_hi];
                            for (gi, go) in gin[iy * w + ix0..iy * w + ix0 + n].iter_mut().zip(gseg) {
                                *gi += wt * go;
                            }
                            if grads.is_some() {
                                wgrad += gseg
                                    .iter()
                                    .zip(&xin[iy * w + ix0..iy * w + ix0 + n])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            }
                        } else {
                            for ox in x_lo..x_hi {
                                let ii = iy * w + ox * stride + kx - padding;
                                gin[ii] += wt * grow[ox];
                                wgrad += grow[ox] * xin[ii];
                            }
                        }
                    }
                    if let Some(grads) = grads.as_deref_mut() {
                        grads.weight[widx] += wgrad;
                    }
                }
            }
        }
    }
    Tensor::from_parts(input.shape().to_vec(), grad_in)
}

/// Returns pooled values and, per output element, the flat input index of the
/// first maximum in row-major window order.
fn maxpool(input: &Tensor, kernel: usize, stride: usize, out_shape: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let x = input.values();
    let mut values = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                values.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (values, argmax)
}

/// Model-level shape errors carry the offending layer index.
pub(crate) fn check_shape(index: usize, layer: &LayerSpec, input: &[usize]) -> Result<Vec<usize>, NetError> {
    layer.output_shape(input).map_err(|detail| NetError::ShapeMismatch {
        layer: index,
        kind: layer.name(),
        detail,
    })
}
