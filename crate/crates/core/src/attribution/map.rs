use crate::netcore::{Image, Tensor};

use super::AttributionError;

/// Per-pixel importance in `[0, 1]`, row-major `height × width`.
///
/// The maximum is 1 unless the map is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttributionMap {
    /// Wraps values that already satisfy the map contract.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, AttributionError> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(AttributionError::Dimensions(format!(
                "{} values for a {height}×{width} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(AttributionError::InvalidMap("values must lie in [0, 1]".into()));
        }
        let max = values.iter().cloned().fold(0.0, f64::max);
        if max != 0.0 && max != 1.0 {
            return Err(AttributionError::InvalidMap(format!("max value {max} is neither 0 nor 1")));
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width], self.values.clone()).expect("valid map")
    }
}

/// Positive and negative evidence maps of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionPair {
    pub plus: AttributionMap,
    pub minus: AttributionMap,
}

/// Result of max-normalization; `all_zero` flags the degenerate map.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub map: AttributionMap,
    pub all_zero: bool,
}

fn hw(map: &Tensor) -> Result<(usize, usize), AttributionError> {
    match map.shape() {
        [h, w] => Ok((*h, *w)),
        s => Err(AttributionError::Dimensions(format!("expected an H×W map, got shape {s:?}"))),
    }
}

/// Element-wise `|x̄ − x|`, shape `C×H×W`.
pub fn perturbation_map(original: &Image, adversarial: &Image) -> Result<Tensor, AttributionError> {
    if original.dims() != adversarial.dims() {
        return Err(AttributionError::Dimensions(format!(
            "perturbation of {:?} and {:?}",
            original.dims(),
            adversarial.dims()
        )));
    }
    let values = adversarial
        .values()
        .iter()
        .zip(original.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(Tensor::new(original.dims().to_vec(), values)?)
}

/// Unweighted channel mean of a `C×H×W` tensor with `C ∈ {1, 3}`.
pub fn to_grayscale(delta: &Tensor) -> Result<Tensor, AttributionError> {
    let [c, h, w] = match delta.shape() {
        [c, h, w] => [*c, *h, *w],
        s => return Err(AttributionError::Dimensions(format!("expected C×H×W, got {s:?}"))),
    };
    if c != 1 && c != 3 {
        return Err(AttributionError::Channels(c));
    }
    let v = delta.values();
    let area = h * w;
    let values = (0..area)
        .map(|i| {
            if c == 1 {
                v[i]
            } else {
                (v[i] + v[area + i] + v[2 * area + i]) / 3.0
            }
        })
        .collect();
    Ok(Tensor::new(vec![h, w], values)?)
}

/// Divides a non-negative `H×W` map by its maximum.
pub fn max_normalize(map: &Tensor) -> Result<Normalized, AttributionError> {
    let (h, w) = hw(map)?;
    if let Some(v) = map.values().iter().find(|&&v| v < 0.0) {
        return Err(AttributionError::InvalidMap(format!("negative value {v} in map")));
    }
    let max = map.values().iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(Normalized {
            map: AttributionMap::zeros(h, w),
            all_zero: true,
        });
    }
    let values = map
        .values()
        .iter()
        .map(|&v| if v == max { 1.0 } else { (v / max).min(1.0) })
        .collect();
    Ok(Normalized {
        map: AttributionMap { height: h, width: w, values },
        all_zero: false,
    })
}

/// Gaussian smoothing parameters: odd kernel size `b` and standard deviation in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurConfig {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            kernel_size: 49,
            sigma: 7.7,
        }
    }
}

impl BlurConfig {
    pub fn new(kernel_size: usize, sigma: f64) -> Result<Self, AttributionError> {
        let cfg = Self { kernel_size, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AttributionError> {
        if self.kernel_size % 2 == 0 {
            return Err(AttributionError::Config(format!(
                "blur kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(AttributionError::Config(format!("blur sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Normalized 1-D kernel of length `kernel_size`.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.kernel_size / 2) as isize;
        let k: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let sum: f64 = k.iter().sum();
        k.into_iter().map(|v| v / sum).collect()
    }
}

/// Mirror index with the edge sample repeated (`d c b a | a b c d | d c b a`),
/// valid for any offset.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(map: &Tensor, cfg: &BlurConfig) -> Result<Tensor, AttributionError> {
    cfg.validate()?;
    let (h, w) = hw(map)?;
    if cfg.kernel_size == 1 {
        return Ok(map.clone());
    }
    let kernel = cfg.kernel();
    let r = (cfg.kernel_size / 2) as isize;
    let src = map.values();
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..w {
            rows[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * line[reflect_index(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * rows[reflect_index(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
    Ok(Tensor::new(vec![h, w], out)?)
}
