//! Layer stacks with designated feature and embedding layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::check_shape;
use super::{LayerGrads, LayerSpec, NetError, Precision, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Final layer emits `classes` logits.
    Classification { classes: usize },
    /// The embedding layer is the final layer and emits `dim` values.
    Embedding { dim: usize },
}

/// Parameters are stored at the model's precision.
fn round_params(layers: &mut [LayerSpec], precision: Precision) {
    for layer in layers {
        if let Some((w, b)) = layer.params_mut() {
            precision.round_slice(w.values_mut());
            precision.round_slice(b.values_mut());
        }
    }
}

/// An ordered differentiable layer stack.
///
/// Layer indices are zero-based. `feature_layer` names the layer whose output is
/// the rank-3 feature map `a`; `embedding_layer` names the layer whose output is
/// the rank-1 vector compared by cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    feature_layer: usize,
    embedding_layer: usize,
    head: Head,
    precision: Precision,
    shapes: Vec<Vec<usize>>,
}

impl ModelGraph {
    pub fn new(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        feature_layer: usize,
        embedding_layer: usize,
        head: Head,
        precision: Precision,
    ) -> Result<Self, NetError> {
        let invalid = |msg: String| Err(NetError::InvalidModel(msg));
        if layers.is_empty() {
            return invalid("model has no layers".into());
        }
        for (i, layer) in layers.iter().enumerate() {
            layer
                .validate()
                .map_err(|detail| NetError::InvalidModel(format!("layer {i}: {detail}")))?;
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            current = check_shape(i, layer, &current)?;
            shapes.push(current.clone());
        }
        let last = layers.len() - 1;
        if feature_layer >= embedding_layer || embedding_layer > last {
            return invalid(format!(
                "need feature_layer < embedding_layer <= {last}, got {feature_layer} and {embedding_layer}"
            ));
        }
        if shapes[feature_layer].len() != 3 {
            return invalid(format!(
                "feature layer {feature_layer} output must be rank 3, got {:?}",
                shapes[feature_layer]
            ));
        }
        if shapes[embedding_layer].len() != 1 {
            return invalid(format!(
                "embedding layer {embedding_layer} output must be rank 1, got {:?}",
                shapes[embedding_layer]
            ));
        }
        match head {
            Head::Classification { classes } => {
                if shapes[last] != [classes] {
                    return invalid(format!("final output {:?} does not match {classes} logits", shapes[last]));
                }
            }
            Head::Embedding { dim } => {
                if embedding_layer != last || shapes[last] != [dim] {
                    return invalid(format!(
                        "embedding head needs the final layer to emit [{dim}], got {:?}",
                        shapes[last]
                    ));
                }
            }
        }
        let mut layers = layers;
        round_params(&mut layers, precision);
        Ok(Self {
            input_shape,
            layers,
            feature_layer,
            embedding_layer,
            head,
            precision,
            shapes,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn feature_layer(&self) -> usize {
        self.feature_layer
    }

    pub fn embedding_layer(&self) -> usize {
        self.embedding_layer
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        round_params(&mut self.layers, precision);
        self
    }

    /// Output shape of layer `index`.
    pub fn layer_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index]
    }

    /// `[C_a, H_a, W_a]` of the feature layer.
    pub fn feature_shape(&self) -> [usize; 3] {
        let s = &self.shapes[self.feature_layer];
        [s[0], s[1], s[2]]
    }

    pub fn embedding_dim(&self) -> usize {
        self.shapes[self.embedding_layer][0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn zero_grads(&self) -> Vec<LayerGrads> {
        self.layers.iter().map(LayerGrads::zeros_for).collect()
    }
}

/// Incremental model construction with seeded He initialization.
pub struct ModelBuilder {
    input_shape: [usize; 3],
    current: Vec<usize>,
    layers: Vec<LayerSpec>,
    feature_layer: Option<usize>,
    embedding_layer: Option<usize>,
    rng: ChaCha8Rng,
    error: Option<NetError>,
}

impl ModelBuilder {
    pub fn new(input_shape: [usize; 3], seed: u64) -> Self {
        Self {
            input_shape,
            current: input_shape.to_vec(),
            layers: Vec::new(),
            feature_layer: None,
            embedding_layer: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            error: None,
        }
    }

    fn push(mut self, layer: LayerSpec) -> Self {
        if self.error.is_some() {
            return self;
        }
        match check_shape(self.layers.len(), &layer, &self.current) {
            Ok(shape) => {
                self.current = shape;
                self.layers.push(layer);
            }
            Err(e) => self.error = Some(e),
        }
        self
    }

    fn he_normal(&mut self, fan_in: usize, n: usize) -> Vec<f64> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| normal.sample(&mut self.rng)).collect()
    }

    pub fn conv2d(mut self, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let in_c = self.current.first().copied().unwrap_or(0);
        let fan_in = (in_c * kernel * kernel).max(1);
        let weight = self.he_normal(fan_in, out_channels * in_c * kernel * kernel);
        let layer = LayerSpec::Conv2d {
            weight: Tensor::from_parts(vec![out_channels, in_c, kernel, kernel], weight),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        };
        if out_channels == 0 || kernel == 0 {
            self.error = Some(NetError::InvalidModel("conv2d needs out_channels and kernel >= 1".into()));
        }
        self.push(layer)
    }

    pub fn relu(self) -> Self {
        self.push(LayerSpec::Relu)
    }

    pub fn maxpool(self, kernel: usize, stride: usize) -> Self {
        self.push(LayerSpec::MaxPool { kernel, stride })
    }

    pub fn global_avgpool(self) -> Self {
        self.push(LayerSpec::GlobalAvgPool)
    }

    pub fn flatten(self) -> Self {
        self.push(LayerSpec::Flatten)
    }

    pub fn linear(mut self, out_dim: usize) -> Self {
        let in_dim = self.current.iter().product::<usize>();
        let bound = (1.0 / in_dim.max(1) as f64).sqrt();
        let weight: Vec<f64> = (0..out_dim * in_dim)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        if out_dim == 0 {
            self.error = Some(NetError::InvalidModel("linear needs out_dim >= 1".into()));
        }
        self.push(LayerSpec::Linear {
            weight: Tensor::from_parts(vec![out_dim, in_dim], weight),
            bias: Tensor::zeros(&[out_dim]),
        })
    }

    /// Appends a prebuilt layer.
    pub fn layer(self, layer: LayerSpec) -> Self {
        self.push(layer)
    }

    /// Marks the most recently added layer as the feature layer.
    pub fn mark_feature(mut self) -> Self {
        self.feature_layer = self.layers.len().checked_sub(1);
        self
    }

    /// Marks the most recently added layer as the embedding layer.
    pub fn mark_embedding(mut self) -> Self {
        self.embedding_layer = self.layers.len().checked_sub(1);
        self
    }

    pub fn build(self, head: Head, precision: Precision) -> Result<ModelGraph, NetError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let last = self.layers.len().saturating_sub(1);
        let feature = self
            .feature_layer
            .ok_or_else(|| NetError::InvalidModel("no feature layer marked".into()))?;
        let embedding = self.embedding_layer.unwrap_or(last);
        ModelGraph::new(self.input_shape, self.layers, feature, embedding, head, precision)
    }
}

/// Desk-scale shapes classifier: three conv blocks, a 16×8×8 feature map,
/// global average pooling and a 4-way linear head.
pub fn shapes_classifier(seed: u64) -> ModelGraph {
    ModelBuilder::new([1, 32, 32], seed)
        .conv2d(6, 3, 1, 1)
        .relu()
        .maxpool(2, 2)
        .conv2d(12, 3, 1, 1)
        .relu()
        .maxpool(2, 2)
        .conv2d(16, 3, 1, 1)
        .relu()
        .mark_feature()
        .global_avgpool()
        .mark_embedding()
        .linear(4)
        .build(Head::Classification { classes: 4 }, Precision::F32)
        .expect("static architecture")
}

/// Desk-scale face embedder: conv blocks down to a 16×8×8 feature map, which is
/// flattened and projected to a `dim`-dimensional embedding.
pub fn identity_embedder(seed: u64, dim: usize) -> ModelGraph {
    ModelBuilder::new([1, 32, 32], seed)
        .conv2d(8, 3, 1, 1)
        .relu()
        .maxpool(2, 2)
        .conv2d(12, 3, 1, 1)
        .relu()
        .maxpool(2, 2)
        .conv2d(16, 3, 1, 1)
        .relu()
        .mark_feature()
        .flatten()
        .linear(dim)
        .mark_embedding()
        .build(Head::Embedding { dim }, Precision::F32)
        .expect("static architecture")
}
