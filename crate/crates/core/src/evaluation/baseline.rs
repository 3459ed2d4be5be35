use std::time::Instant;

use rand::Rng;

use crate::attribution::{max_normalize, AttributionMap};
use crate::netcore::Tensor;
use crate::seeds::item_rng;

use super::EvalError;

/// Uniform random map, max-normalized.
pub fn random_baseline_map(height: usize, width: usize, seed: u64) -> Result<AttributionMap, EvalError> {
    let mut rng = item_rng(seed, 0);
    let values = (0..height * width).map(|_| rng.random::<f64>()).collect();
    Ok(max_normalize(&Tensor::new(vec![height, width], values)?)?.map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeStats {
    /// Wall time per repetition in seconds, in run order.
    pub samples: Vec<f64>,
    pub median: f64,
    /// `max − min`.
    pub spread: f64,
}

pub fn runtime_probe<T>(mut op: impl FnMut() -> T, repetitions: usize) -> Result<RuntimeStats, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::Config("repetitions must be >= 1".into()));
    }
    let samples: Vec<f64> = (0..repetitions)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(op());
            t.elapsed().as_secs_f64()
        })
        .collect();
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(RuntimeStats {
        median,
        spread: sorted[n - 1] - sorted[0],
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub positives: usize,
    pub negatives: usize,
    /// `P(X ≥ positives)` for `X ~ Binomial(positives + negatives, 1/2)`.
    pub p_value: f64,
}

/// One-sided sign test that paired differences tend to be positive; exact zeros are dropped.
pub fn sign_test(differences: &[f64]) -> SignTest {
    let positives = differences.iter().filter(|&&d| d > 0.0).count();
    let negatives = differences.iter().filter(|&&d| d < 0.0).count();
    let n = positives + negatives;
    // ln C(n, k) built incrementally, summed in probability space.
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0;
    let mut p_value = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= positives {
            p_value += (ln_choose + ln_half_n).exp();
        }
    }
    SignTest {
        positives,
        negatives,
        p_value: p_value.min(1.0),
    }
}
