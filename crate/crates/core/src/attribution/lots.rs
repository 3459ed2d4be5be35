//! Iterative max-normalized gradient descent on the input (LOTS).

use crate::netcore::{loss_and_input_gradient, Image, LossSpec, ModelGraph, Tensor};

use super::AttributionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    /// Stop when the loss changed by less than `tol` over the last `window` steps.
    pub tol: f64,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LotsConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub clip_min: f64,
    pub clip_max: f64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for LotsConfig {
    fn default() -> Self {
        Self {
            eta: 1.0 / 255.0,
            max_iters: 500,
            clip_min: 0.0,
            clip_max: 1.0,
            early_stop: None,
        }
    }
}

impl LotsConfig {
    pub fn validate(&self) -> Result<(), AttributionError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(AttributionError::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(AttributionError::Config("max_iters must be >= 1".into()));
        }
        if !(0.0 <= self.clip_min && self.clip_min < self.clip_max && self.clip_max <= 1.0) {
            return Err(AttributionError::Config(format!(
                "clip range [{}, {}] must be a sub-interval of [0, 1]",
                self.clip_min, self.clip_max
            )));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || !(es.tol >= 0.0) {
                return Err(AttributionError::Config(format!("invalid early stop {es:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    ZeroGradient,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LotsOutcome {
    pub adversarial: Image,
    /// `losses[t]` is the loss after `t` updates; length `steps + 1`.
    pub losses: Vec<f64>,
    /// Number of updates applied.
    pub steps: usize,
    pub termination: Termination,
}

impl LotsOutcome {
    pub fn zero_gradient(&self) -> bool {
        self.termination == Termination::ZeroGradient
    }
}

/// Runs `x̄ ← clip(x̄ − η ∇/max|∇|)` from `x̄ = x`.
pub fn lots_iterate(
    model: &ModelGraph,
    image: &Image,
    spec: &LossSpec,
    cfg: &LotsConfig,
) -> Result<LotsOutcome, AttributionError> {
    cfg.validate()?;
    spec.validate(model)?;
    let precision = model.precision();
    let mut x: Tensor = image.tensor().clone();
    let mut losses = Vec::with_capacity(cfg.max_iters + 1);
    let mut termination = Termination::MaxIters;
    let mut steps = 0;
    loop {
        let (loss, grad) = loss_and_input_gradient(model, &x, spec)?;
        losses.push(loss);
        if steps == cfg.max_iters {
            break;
        }
        if let Some(es) = cfg.early_stop {
            if steps >= es.window && (losses[steps - es.window] - loss).abs() < es.tol {
                termination = Termination::EarlyStop;
                break;
            }
        }
        let gmax = grad.max_abs();
        if gmax == 0.0 {
            termination = Termination::ZeroGradient;
            break;
        }
        let step = cfg.eta / gmax;
        for (xi, gi) in x.values_mut().iter_mut().zip(grad.values()) {
            *xi = precision.round((*xi - step * gi).clamp(cfg.clip_min, cfg.clip_max));
        }
        steps += 1;
    }
    Ok(LotsOutcome {
        adversarial: Image::from_tensor(x)?,
        losses,
        steps,
        termination,
    })
}
