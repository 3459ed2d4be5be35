//! Forward traces, scalar losses and reverse-mode gradients.

use super::{Head, Image, LayerGrads, ModelGraph, NetError, Tensor};

/// Input and every layer activation of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    input: Tensor,
    activations: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }

    pub fn activation(&self, layer: usize) -> &Tensor {
        &self.activations[layer]
    }

    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("models have at least one layer")
    }

    /// Input of layer `index`.
    fn layer_input(&self, index: usize) -> &Tensor {
        if index == 0 {
            &self.input
        } else {
            &self.activations[index - 1]
        }
    }
}

/// Which scalar is backpropagated.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// `‖a[row, col]‖₁` on the feature layer (zero-based location).
    FeatureZero { row: usize, col: usize },
    /// Logit `z_o` of a zero-based class.
    ClassLogit { class: usize },
    /// Cosine similarity `s` to a frozen gallery embedding.
    SimilarityPlus { gallery_embedding: Tensor },
    /// `1 - s` against a frozen gallery embedding.
    SimilarityMinus { gallery_embedding: Tensor },
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::FeatureZero { .. } => "feature_zero",
            LossSpec::ClassLogit { .. } => "class_logit",
            LossSpec::SimilarityPlus { .. } => "similarity_plus",
            LossSpec::SimilarityMinus { .. } => "similarity_minus",
        }
    }

    /// Checks the spec against the model head and layer shapes.
    pub fn validate(&self, model: &ModelGraph) -> Result<(), NetError> {
        match self {
            LossSpec::FeatureZero { row, col } => {
                let [_, h, w] = model.feature_shape();
                if *row >= h || *col >= w {
                    return Err(NetError::InvalidLoss(format!(
                        "feature location ({row}, {col}) outside {h}×{w} feature map"
                    )));
                }
            }
            LossSpec::ClassLogit { class } => match model.head() {
                Head::Classification { classes } if *class < classes => {}
                Head::Classification { classes } => {
                    return Err(NetError::InvalidLoss(format!(
                        "class {class} out of range for {classes} logits"
                    )))
                }
                Head::Embedding { .. } => {
                    return Err(NetError::InvalidLoss("class logit loss needs a classification head".into()))
                }
            },
            LossSpec::SimilarityPlus { gallery_embedding } | LossSpec::SimilarityMinus { gallery_embedding } => {
                if !matches!(model.head(), Head::Embedding { .. }) {
                    return Err(NetError::InvalidLoss("similarity losses need an embedding head".into()));
                }
                if gallery_embedding.shape() != [model.embedding_dim()] {
                    return Err(NetError::InvalidLoss(format!(
                        "gallery embedding shape {:?} differs from embedding dim {}",
                        gallery_embedding.shape(),
                        model.embedding_dim()
                    )));
                }
                if gallery_embedding.l2_norm() == 0.0 {
                    return Err(NetError::ZeroNorm);
                }
            }
        }
        Ok(())
    }
}

/// Runs the model on an image.
pub fn forward(model: &ModelGraph, image: &Image) -> Result<ForwardTrace, NetError> {
    forward_tensor(model, image.tensor())
}

/// Runs the model on an arbitrary tensor (used by finite-difference oracles,
/// which may step outside `[0, 1]`).
pub fn forward_tensor(model: &ModelGraph, input: &Tensor) -> Result<ForwardTrace, NetError> {
    if input.shape() != model.input_shape() {
        return Err(NetError::ShapeMismatch {
            layer: 0,
            kind: model.layers()[0].name(),
            detail: format!("model expects input {:?}, got {:?}", model.input_shape(), input.shape()),
        });
    }
    let precision = model.precision();
    let mut activations: Vec<Tensor> = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let x = if i == 0 { input } else { &activations[i - 1] };
        let mut y = layer.forward(x, model.layer_shape(i));
        precision.round_slice(y.values_mut());
        activations.push(y);
    }
    Ok(ForwardTrace {
        input: input.clone(),
        activations,
    })
}

pub fn cosine(g: &Tensor, p: &Tensor) -> Result<f64, NetError> {
    if g.shape() != p.shape() {
        return Err(NetError::InvalidLoss(format!(
            "cosine of shapes {:?} and {:?}",
            g.shape(),
            p.shape()
        )));
    }
    let (ng, np) = (g.l2_norm(), p.l2_norm());
    if ng == 0.0 || np == 0.0 {
        return Err(NetError::ZeroNorm);
    }
    Ok((g.dot(p) / (ng * np)).clamp(-1.0, 1.0))
}

fn check_trace(trace: &ForwardTrace, model: &ModelGraph) -> Result<(), NetError> {
    let ok = trace.activations.len() == model.layers().len()
        && trace
            .activations
            .iter()
            .enumerate()
            .all(|(i, a)| a.shape() == model.layer_shape(i));
    if ok {
        Ok(())
    } else {
        Err(NetError::TraceMismatch)
    }
}

/// Activation of the feature layer, `C_a×H_a×W_a`.
pub fn extract_feature_map<'t>(trace: &'t ForwardTrace, model: &ModelGraph) -> Result<&'t Tensor, NetError> {
    check_trace(trace, model)?;
    Ok(trace.activation(model.feature_layer()))
}

pub fn embedding<'t>(trace: &'t ForwardTrace, model: &ModelGraph) -> Result<&'t Tensor, NetError> {
    check_trace(trace, model)?;
    Ok(trace.activation(model.embedding_layer()))
}

/// Loss value together with the layer it is defined on and its gradient
/// w.r.t. that layer's activation.
struct Seed {
    value: f64,
    layer: usize,
    grad: Tensor,
}

fn seed(model: &ModelGraph, trace: &ForwardTrace, spec: &LossSpec) -> Result<Seed, NetError> {
    spec.validate(model)?;
    check_trace(trace, model)?;
    match spec {
        LossSpec::FeatureZero { row, col } => {
            let layer = model.feature_layer();
            let a = trace.activation(layer);
            let [c_a, h, w] = model.feature_shape();
            let mut grad = Tensor::zeros(a.shape());
            let mut value = 0.0;
            for c in 0..c_a {
                let idx = (c * h + row) * w + col;
                let v = a.values()[idx];
                value += v.abs();
                grad.values_mut()[idx] = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            Ok(Seed { value, layer, grad })
        }
        LossSpec::ClassLogit { class } => {
            let layer = model.layers().len() - 1;
            let z = trace.activation(layer);
            let mut grad = Tensor::zeros(z.shape());
            grad.values_mut()[*class] = 1.0;
            Ok(Seed {
                value: z.values()[*class],
                layer,
                grad,
            })
        }
        LossSpec::SimilarityPlus { gallery_embedding } | LossSpec::SimilarityMinus { gallery_embedding } => {
            let layer = model.embedding_layer();
            let p = trace.activation(layer);
            let s = cosine(gallery_embedding, p)?;
            // Both normalizers are constants: ds/dp = ĝ / ‖p‖.
            let scale = 1.0 / (gallery_embedding.l2_norm() * p.l2_norm());
            let sign = if matches!(spec, LossSpec::SimilarityPlus { .. }) { 1.0 } else { -1.0 };
            let grad = gallery_embedding.scaled(sign * scale);
            let value = if sign > 0.0 { s } else { 1.0 - s };
            Ok(Seed { value, layer, grad })
        }
    }
}

pub fn loss_value(model: &ModelGraph, trace: &ForwardTrace, spec: &LossSpec) -> Result<f64, NetError> {
    Ok(model.precision().round(seed(model, trace, spec)?.value))
}

/// Propagates `grad` (w.r.t. the output of layer `from`) down to the output of
/// layer `to` (exclusive lower bound), or to the input when `to` is `None`.
fn propagate(
    model: &ModelGraph,
    trace: &ForwardTrace,
    from: usize,
    mut grad: Tensor,
    to: Option<usize>,
    mut param_grads: Option<&mut [LayerGrads]>,
) -> Tensor {
    let precision = model.precision();
    let stop = to.map_or(0, |t| t + 1);
    for i in (stop..=from).rev() {
        let layer_grads = param_grads.as_deref_mut().map(|g| &mut g[i]);
        grad = model.layers()[i].backward(trace.layer_input(i), &grad, layer_grads);
        precision.round_slice(grad.values_mut());
    }
    grad
}

/// Loss value and its gradient w.r.t. every input element.
pub fn loss_and_input_gradient(model: &ModelGraph, input: &Tensor, spec: &LossSpec) -> Result<(f64, Tensor), NetError> {
    let trace = forward_tensor(model, input)?;
    let s = seed(model, &trace, spec)?;
    let grad = propagate(model, &trace, s.layer, s.grad, None, None);
    Ok((model.precision().round(s.value), grad))
}

/// Exact gradient of [`loss_value`] w.r.t. every input pixel.
///
/// For similarity losses the gallery embedding and both cosine normalizers are
/// treated as constants.
pub fn backward_to_input(model: &ModelGraph, image: &Image, spec: &LossSpec) -> Result<Tensor, NetError> {
    loss_and_input_gradient(model, image.tensor(), spec).map(|(_, g)| g)
}

/// Gradient of the loss w.r.t. the activation of `layer`.
pub fn gradient_at_layer(
    model: &ModelGraph,
    trace: &ForwardTrace,
    spec: &LossSpec,
    layer: usize,
) -> Result<Tensor, NetError> {
    let s = seed(model, trace, spec)?;
    if layer > s.layer {
        return Err(NetError::InvalidLoss(format!(
            "loss is defined at layer {}, cannot differentiate w.r.t. later layer {layer}",
            s.layer
        )));
    }
    if layer == s.layer {
        return Ok(s.grad);
    }
    Ok(propagate(model, trace, s.layer, s.grad, Some(layer), None))
}

/// Backpropagates an arbitrary gradient w.r.t. the output of layer `from` down
/// to the input, accumulating parameter gradients when `param_grads` is given.
pub fn backward_from(
    model: &ModelGraph,
    trace: &ForwardTrace,
    from: usize,
    grad: Tensor,
    param_grads: Option<&mut [LayerGrads]>,
) -> Result<Tensor, NetError> {
    check_trace(trace, model)?;
    if from >= model.layers().len() || grad.shape() != model.layer_shape(from) {
        return Err(NetError::InvalidLoss(format!(
            "gradient shape {:?} does not match layer {from}",
            grad.shape()
        )));
    }
    Ok(propagate(model, trace, from, grad, None, param_grads))
}

#[cfg(test)]
mod tests {
    use super::super::{LayerSpec, ModelBuilder, Precision};
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    fn identity_conv_model(h: usize, w: usize) -> ModelGraph {
        ModelBuilder::new([1, h, w], 0)
            .layer(LayerSpec::Conv2d {
                weight: t(&[1, 1, 1, 1], &[1.0]),
                bias: t(&[1], &[0.0]),
                stride: 1,
                padding: 0,
            })
            .mark_feature()
            .flatten()
            .linear(2)
            .build(Head::Embedding { dim: 2 }, Precision::F64)
            .unwrap()
    }

    #[test]
    fn identity_conv_reproduces_input() {
        let model = identity_conv_model(3, 4);
        let img = Image::new(1, 3, 4, (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        let trace = forward(&model, &img).unwrap();
        assert_eq!(trace.activation(0).values(), img.values());
        assert_eq!(extract_feature_map(&trace, &model).unwrap().values(), img.values());
    }

    #[test]
    fn relu_of_negatives_is_zero() {
        let y = LayerSpec::Relu.forward(&t(&[3], &[-1.0, -0.5, -2.0]), &[3]);
        assert_eq!(y.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn input_mismatch_names_first_layer() {
        let model = identity_conv_model(3, 4);
        let err = forward(&model, &Image::zeros(1, 4, 4)).unwrap_err();
        assert!(matches!(err, NetError::ShapeMismatch { layer: 0, .. }));
    }

    #[test]
    fn cosine_cases() {
        let e = |a: f64, b: f64| t(&[2], &[a, b]);
        assert_eq!(cosine(&e(1.0, 0.0), &e(1.0, 0.0)).unwrap(), 1.0);
        assert_eq!(cosine(&e(1.0, 0.0), &e(0.0, 1.0)).unwrap(), 0.0);
        assert_eq!(cosine(&e(1.0, 0.0), &e(-1.0, 0.0)).unwrap(), -1.0);
        assert!(matches!(cosine(&e(0.0, 0.0), &e(1.0, 0.0)), Err(NetError::ZeroNorm)));
    }

    #[test]
    fn feature_zero_values() {
        let model = ModelBuilder::new([2, 1, 2], 0)
            .layer(LayerSpec::Conv2d {
                weight: t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]),
                bias: t(&[2], &[0.0, 0.0]),
                stride: 1,
                padding: 0,
            })
            .mark_feature()
            .flatten()
            .linear(1)
            .build(Head::Classification { classes: 1 }, Precision::F64)
            .unwrap();
        // channel 0 = (0.5, 0), channel 1 = (-0.5, 0); a[0,0] = (0.5, -0.5), a[0,1] = 0.
        let x = t(&[2, 1, 2], &[0.5, 0.0, -0.5, 0.0]);
        let trace = forward_tensor(&model, &x).unwrap();
        let at = |col| loss_value(&model, &trace, &LossSpec::FeatureZero { row: 0, col }).unwrap();
        assert_eq!(at(0), 1.0);
        assert_eq!(at(1), 0.0);
        assert!(matches!(
            loss_value(&model, &trace, &LossSpec::FeatureZero { row: 1, col: 0 }),
            Err(NetError::InvalidLoss(_))
        ));
    }

    #[test]
    fn similarity_plus_of_own_embedding_is_one() {
        let model = identity_conv_model(2, 2);
        let img = Image::new(1, 2, 2, vec![0.1, 0.7, 0.3, 0.9]).unwrap();
        let trace = forward(&model, &img).unwrap();
        let own = embedding(&trace, &model).unwrap().clone();
        let s = loss_value(&model, &trace, &LossSpec::SimilarityPlus { gallery_embedding: own.clone() }).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        let m = loss_value(&model, &trace, &LossSpec::SimilarityMinus { gallery_embedding: own }).unwrap();
        assert!(m.abs() < 1e-15);
    }

    #[test]
    fn spec_head_mismatch_errors() {
        let model = identity_conv_model(2, 2);
        let trace = forward(&model, &Image::zeros(1, 2, 2)).unwrap();
        assert!(loss_value(&model, &trace, &LossSpec::ClassLogit { class: 0 }).is_err());
        let wrong_dim = LossSpec::SimilarityPlus {
            gallery_embedding: t(&[3], &[1.0, 0.0, 0.0]),
        };
        assert!(loss_value(&model, &trace, &wrong_dim).is_err());
    }

    #[test]
    fn gradient_at_feature_layer_matches_seed_for_feature_loss() {
        let model = identity_conv_model(2, 2);
        let img = Image::new(1, 2, 2, vec![0.1, 0.7, 0.3, 0.9]).unwrap();
        let trace = forward(&model, &img).unwrap();
        let g = gradient_at_layer(&model, &trace, &LossSpec::FeatureZero { row: 1, col: 0 }, 0).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
