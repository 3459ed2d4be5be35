use crate::attribution::AttributionMap;

use super::EvalError;

/// Binary `H×W` ground-truth object mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, EvalError> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(EvalError::Dimensions(format!("{} bits for a {height}×{width} mask", bits.len())));
        }
        Ok(Self { height, width, bits })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Pixels with `value >= thr`.
pub fn binarize(map: &AttributionMap, thr: f64) -> Vec<bool> {
    map.values().iter().map(|&v| v >= thr).collect()
}

/// Intersection over union of `binarize(map, thr)` and the mask; 0 when the
/// union is empty.
pub fn iou(map: &AttributionMap, truth: &GroundTruthMask, thr: f64) -> Result<f64, EvalError> {
    if map.dims() != (truth.height, truth.width) {
        return Err(EvalError::Dimensions(format!(
            "map {:?} vs mask {:?}",
            map.dims(),
            (truth.height, truth.width)
        )));
    }
    if !(thr > 0.0 && thr < 1.0) {
        return Err(EvalError::Config(format!("IoU threshold must be in (0, 1), got {thr}")));
    }
    Ok(iou_bits(&binarize(map, thr), &truth.bits))
}

pub(crate) fn iou_bits(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
