//! Deletion and insertion curves with normalized area under the curve.

use rayon::prelude::*;

use crate::attribution::AttributionMap;
use crate::netcore::{cosine, embedding, forward, Head, Image, ModelGraph};
use crate::training::softmax_probs;

use super::{top_mask, EvalError};

pub const DEFAULT_P_GRID: [f64; 11] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

/// Trapezoid area over `P / 100`; the grid must run from 0 to 100.
pub fn trapezoid_auc(p_grid: &[f64], values: &[f64]) -> Result<f64, EvalError> {
    check_grid(p_grid)?;
    if values.len() != p_grid.len() {
        return Err(EvalError::Dimensions(format!(
            "{} values for {} grid points",
            values.len(),
            p_grid.len()
        )));
    }
    let area: f64 = p_grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(p, v)| (p[1] - p[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    Ok(area / 100.0)
}

fn check_grid(p_grid: &[f64]) -> Result<(), EvalError> {
    let ok = p_grid.len() >= 2
        && p_grid[0] == 0.0
        && p_grid[p_grid.len() - 1] == 100.0
        && p_grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(EvalError::Config(format!(
            "P grid must increase strictly from 0 to 100, got {p_grid:?}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    pub p_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub auc: f64,
}

impl EvalCurve {
    pub fn new(p_grid: Vec<f64>, values: Vec<f64>) -> Result<Self, EvalError> {
        let auc = trapezoid_auc(&p_grid, &values)?;
        Ok(Self { p_grid, values, auc })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMode {
    /// Top-`P`% pixels set to 0.
    Delete,
    /// Top-`P`% pixels restored onto an all-zero canvas.
    Insert,
}

impl CurveMode {
    pub fn name(self) -> &'static str {
        match self {
            CurveMode::Delete => "delete",
            CurveMode::Insert => "insert",
        }
    }
}

/// Applies one removal step to every channel of `image`.
pub fn apply_removal(image: &Image, map: &AttributionMap, p_percent: f64, mode: CurveMode) -> Result<Image, EvalError> {
    let [c, h, w] = image.dims();
    if map.dims() != (h, w) {
        return Err(EvalError::Dimensions(format!("map {:?} vs image {h}×{w}", map.dims())));
    }
    let top = top_mask(map, p_percent)?;
    let mut values = image.values().to_vec();
    for ch in 0..c {
        for (v, &t) in values[ch * h * w..(ch + 1) * h * w].iter_mut().zip(&top) {
            let keep = match mode {
                CurveMode::Delete => !t,
                CurveMode::Insert => t,
            };
            if !keep {
                *v = 0.0;
            }
        }
    }
    Ok(Image::new(c, h, w, values)?)
}

/// Pairs compared at a fixed cosine decision threshold (accept when `s ≥ θ`).
#[derive(Debug, Clone)]
pub struct VerificationProtocol {
    pub pairs: Vec<(Image, Image, bool)>,
    pub threshold: f64,
}

impl VerificationProtocol {
    pub fn new(pairs: Vec<(Image, Image, bool)>, threshold: f64) -> Result<Self, EvalError> {
        if !threshold.is_finite() {
            return Err(EvalError::Protocol(format!("threshold {threshold} is not finite")));
        }
        if !pairs.iter().any(|p| p.2) || !pairs.iter().any(|p| !p.2) {
            return Err(EvalError::Protocol("both genuine and impostor pairs are required".into()));
        }
        Ok(Self { pairs, threshold })
    }

    fn decide(&self, model: &ModelGraph, gallery: &Image, probe: &Image, genuine: bool) -> Result<bool, EvalError> {
        let g = forward(model, gallery)?;
        let p = forward(model, probe)?;
        let s = cosine(embedding(&g, model)?, embedding(&p, model)?)?;
        Ok((s >= self.threshold) == genuine)
    }

    /// Fraction of correctly decided pairs on unmodified images.
    pub fn clean_accuracy(&self, model: &ModelGraph) -> Result<f64, EvalError> {
        let correct = self
            .pairs
            .par_iter()
            .map(|(g, p, y)| self.decide(model, g, p, *y))
            .collect::<Result<Vec<bool>, _>>()?;
        Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

impl ClassificationSet {
    pub fn new(images: Vec<Image>, labels: Vec<usize>) -> Result<Self, EvalError> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(EvalError::Protocol(format!(
                "{} images with {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    fn true_prob(model: &ModelGraph, image: &Image, label: usize) -> Result<f64, EvalError> {
        let trace = forward(model, image)?;
        softmax_probs(trace.output())
            .get(label)
            .copied()
            .ok_or_else(|| EvalError::Protocol(format!("label {label} outside the model outputs")))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CurveTask<'a> {
    /// Maps belong to the probes; galleries stay untouched. Metric: accuracy.
    Verification(&'a VerificationProtocol),
    /// One map per image. Metric: mean true-class softmax probability.
    Classification(&'a ClassificationSet),
}

pub fn deletion_insertion_curve(
    model: &ModelGraph,
    task: CurveTask<'_>,
    maps: &[AttributionMap],
    mode: CurveMode,
    p_grid: &[f64],
) -> Result<EvalCurve, EvalError> {
    check_grid(p_grid)?;
    let values = match task {
        CurveTask::Verification(protocol) => {
            if !matches!(model.head(), Head::Embedding { .. }) {
                return Err(EvalError::Config("verification curves need an embedding head".into()));
            }
            if maps.len() < protocol.pairs.len() {
                return Err(EvalError::MissingMap(format!("pair {}", maps.len())));
            }
            p_grid
                .iter()
                .map(|&p| {
                    let correct = protocol
                        .pairs
                        .par_iter()
                        .zip(maps)
                        .map(|((g, probe, y), m)| {
                            let altered = apply_removal(probe, m, p, mode)?;
                            protocol.decide(model, g, &altered, *y)
                        })
                        .collect::<Result<Vec<bool>, EvalError>>()?;
                    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
                })
                .collect::<Result<Vec<f64>, EvalError>>()?
        }
        CurveTask::Classification(set) => {
            if maps.len() < set.images.len() {
                return Err(EvalError::MissingMap(format!("image {}", maps.len())));
            }
            p_grid
                .iter()
                .map(|&p| {
                    let probs = set
                        .images
                        .par_iter()
                        .zip(&set.labels)
                        .zip(maps)
                        .map(|((img, &y), m)| ClassificationSet::true_prob(model, &apply_removal(img, m, p, mode)?, y))
                        .collect::<Result<Vec<f64>, EvalError>>()?;
                    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
                })
                .collect::<Result<Vec<f64>, EvalError>>()?
        }
    };
    EvalCurve::new(p_grid.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_fixtures() {
        assert_eq!(trapezoid_auc(&[0.0, 50.0, 100.0], &[1.0, 0.5, 0.0]).unwrap(), 0.5);
        assert_eq!(trapezoid_auc(&DEFAULT_P_GRID, &[1.0; 11]).unwrap(), 1.0);
        assert_eq!(trapezoid_auc(&DEFAULT_P_GRID, &[0.0; 11]).unwrap(), 0.0);
        assert!(trapezoid_auc(&[0.0, 60.0, 50.0, 100.0], &[0.0; 4]).is_err());
        assert!(trapezoid_auc(&[10.0, 100.0], &[0.0; 2]).is_err());
    }

    #[test]
    fn removal_modes() {
        let img = Image::new(1, 1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let map = AttributionMap::new(1, 4, vec![0.2, 1.0, 0.5, 0.0]).unwrap();
        let d = apply_removal(&img, &map, 50.0, CurveMode::Delete).unwrap();
        assert_eq!(d.values(), &[0.1, 0.0, 0.0, 0.4]);
        let i = apply_removal(&img, &map, 50.0, CurveMode::Insert).unwrap();
        assert_eq!(i.values(), &[0.0, 0.2, 0.3, 0.0]);
        assert_eq!(apply_removal(&img, &map, 100.0, CurveMode::Insert).unwrap(), img);
        assert_eq!(apply_removal(&img, &map, 0.0, CurveMode::Delete).unwrap(), img);
    }
}
