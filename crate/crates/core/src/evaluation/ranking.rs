use crate::attribution::AttributionMap;

use super::EvalError;

/// Pixel indices by descending value; ties keep ascending row-major order.
pub fn rank_pixels(map: &AttributionMap) -> Vec<usize> {
    let v = map.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    order
}

/// `round(P / 100 · n)` pixels for a percentage `P ∈ [0, 100]`.
pub fn removal_count(p_percent: f64, n: usize) -> Result<usize, EvalError> {
    if !(0.0..=100.0).contains(&p_percent) {
        return Err(EvalError::Config(format!("P must be in [0, 100], got {p_percent}")));
    }
    Ok(((p_percent / 100.0) * n as f64).round() as usize)
}

/// Boolean mask of the top-`P`% ranked pixels.
pub fn top_mask(map: &AttributionMap, p_percent: f64) -> Result<Vec<bool>, EvalError> {
    let n = map.values().len();
    let k = removal_count(p_percent, n)?;
    let mut mask = vec![false; n];
    for &i in rank_pixels(map).iter().take(k) {
        mask[i] = true;
    }
    Ok(mask)
}
