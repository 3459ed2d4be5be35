//! Dense row-major tensors and images.

use super::NetError;

/// Arithmetic precision used by a model.
///
/// Values are always stored as `f64`. In [`Precision::F32`] mode every layer
/// output, gradient and parameter update is rounded through `f32`, which
/// reproduces single-precision results without a second code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }

    pub fn round_slice(self, values: &mut [f64]) {
        if self == Precision::F32 {
            for v in values {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            32 => Some(Precision::F32),
            64 => Some(Precision::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting inconsistent shapes and non-finite values.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NetError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(NetError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NetError::LengthMismatch {
                shape,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(NetError::NonFinite { index });
        }
        Ok(Self { shape, values })
    }

    /// Internal constructor for values produced by finite arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; len])
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self, NetError> {
        if shape.iter().product::<usize>() != self.values.len() {
            return Err(NetError::LengthMismatch {
                shape,
                len: self.values.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Tensor {
        Tensor::from_parts(
            self.shape.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Element at a `[c, y, x]` index of a rank-3 tensor.
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.values[(c * h + y) * w + x]
    }
}

/// An image with 1 or 3 channels and values in `[0, 1]`, stored as `C×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    tensor: Tensor,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self, NetError> {
        let tensor = Tensor::new(vec![channels, height, width], values)?;
        Self::from_tensor(tensor)
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self, NetError> {
        if tensor.rank() != 3 || !matches!(tensor.shape()[0], 1 | 3) {
            return Err(NetError::InvalidImage(format!(
                "expected 1 or 3 channels in a C×H×W tensor, got shape {:?}",
                tensor.shape()
            )));
        }
        if let Some(index) = tensor.values().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(NetError::InvalidImage(format!(
                "value {} at index {index} outside [0, 1]",
                tensor.values()[index]
            )));
        }
        Ok(Self { tensor })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            tensor: Tensor::zeros(&[channels, height, width]),
        }
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamped(mut tensor: Tensor) -> Result<Self, NetError> {
        for v in tensor.values_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Self::from_tensor(tensor)
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels(), self.height(), self.width()]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.values()
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.tensor.at3(c, y, x)
    }
}
