//! Noisy linear imputation: each removed pixel equals the mean of its in-image
//! 4-neighbours (removed neighbours are unknowns too), plus Gaussian noise.

use rand_distr::{Distribution, Normal};

use crate::netcore::Image;
use crate::seeds::item_rng;

use super::EvalError;

/// Solves `A u = b` for symmetric positive definite `A` given as a product.
fn conjugate_gradient(apply: impl Fn(&[f64], &mut [f64]), b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    if b_norm == 0.0 {
        return x;
    }
    for _ in 0..(10 * n + 100) {
        if rr.sqrt() <= 1e-14 * b_norm {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// Replaces pixels where `removed` is set (row-major, `H·W` entries, shared by
/// all channels). `noise_sigma = 0` disables the noise; results are clipped to `[0, 1]`.
pub fn noisy_linear_impute(image: &Image, removed: &[bool], noise_sigma: f64, seed: u64) -> Result<Image, EvalError> {
    let [c, h, w] = image.dims();
    if removed.len() != h * w {
        return Err(EvalError::Dimensions(format!("mask has {} entries for {h}×{w} image", removed.len())));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(EvalError::Config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let unknowns: Vec<usize> = (0..h * w).filter(|&i| removed[i]).collect();
    if unknowns.is_empty() {
        return Ok(image.clone());
    }
    if unknowns.len() == h * w {
        return Err(EvalError::Underdetermined);
    }
    let mut slot = vec![usize::MAX; h * w];
    for (k, &i) in unknowns.iter().enumerate() {
        slot[i] = k;
    }
    let neighbours = |i: usize| {
        let (y, x) = (i / w, i % w);
        [
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
        ]
        .into_iter()
        .flatten()
    };
    // Row k: deg·u_k − Σ_{removed j} u_j = Σ_{kept j} x_j.
    let degree: Vec<f64> = unknowns.iter().map(|&i| neighbours(i).count() as f64).collect();
    let apply = |u: &[f64], out: &mut [f64]| {
        for (k, &i) in unknowns.iter().enumerate() {
            let mut acc = degree[k] * u[k];
            for j in neighbours(i) {
                if removed[j] {
                    acc -= u[slot[j]];
                }
            }
            out[k] = acc;
        }
    };
    let normal = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).map_err(|e| EvalError::Config(e.to_string()))?)
    } else {
        None
    };
    let mut rng = item_rng(seed, 0);
    let mut values = image.values().to_vec();
    for ch in 0..c {
        let plane = &image.values()[ch * h * w..(ch + 1) * h * w];
        let b: Vec<f64> = unknowns
            .iter()
            .map(|&i| neighbours(i).filter(|&j| !removed[j]).map(|j| plane[j]).sum())
            .collect();
        let u = conjugate_gradient(apply, &b);
        for (k, &i) in unknowns.iter().enumerate() {
            let noise = normal.map_or(0.0, |n| n.sample(&mut rng));
            values[ch * h * w + i] = (u[k] + noise).clamp(0.0, 1.0);
        }
    }
    Ok(Image::new(c, h, w, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_center_and_corner() {
        let img = Image::new(1, 3, 3, vec![0.5; 9]).unwrap();
        let mut m = vec![false; 9];
        m[4] = true;
        let out = noisy_linear_impute(&img, &m, 0.0, 0).unwrap();
        assert!((out.values()[4] - 0.5).abs() < 1e-14);

        let img = Image::new(1, 2, 2, vec![0.9, 0.2, 0.6, 0.4]).unwrap();
        let out = noisy_linear_impute(&img, &[true, false, false, false], 0.0, 0).unwrap();
        assert!((out.values()[0] - 0.4).abs() < 1e-14);
        assert_eq!(&out.values()[1..], &[0.2, 0.6, 0.4]);
    }

    #[test]
    fn all_removed_errors_and_noise_is_seeded() {
        let img = Image::new(1, 2, 2, vec![0.5; 4]).unwrap();
        assert!(matches!(
            noisy_linear_impute(&img, &[true; 4], 0.0, 0),
            Err(EvalError::Underdetermined)
        ));
        let m = [true, false, false, false];
        let a = noisy_linear_impute(&img, &m, 0.05, 3).unwrap();
        assert_eq!(a, noisy_linear_impute(&img, &m, 0.05, 3).unwrap());
        assert_ne!(a, noisy_linear_impute(&img, &m, 0.05, 4).unwrap());
    }
}
