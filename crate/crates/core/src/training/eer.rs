//! Equal-error-rate threshold selection.
//!
//! A pair is accepted when `score >= θ`. Candidate thresholds are the lowest
//! pooled score (accept everything), the midpoints between consecutive distinct
//! pooled scores, and `max + 1` (reject everything). The selected θ minimizes
//! `|FAR − FRR|`, ties going to the lower θ; the reported EER is
//! `(FAR + FRR) / 2` at θ.

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    pub threshold: f64,
    pub eer: f64,
    pub far: f64,
    pub frr: f64,
}

pub fn eer_threshold(genuine: &[f64], impostor: &[f64]) -> Result<EerPoint, TrainError> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(TrainError::EmptyScores);
    }
    if genuine.iter().chain(impostor).any(|v| !v.is_finite()) {
        return Err(TrainError::Config("scores must be finite".into()));
    }
    let mut g = genuine.to_vec();
    let mut i = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut pooled: Vec<f64> = g.iter().chain(&i).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();

    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(pooled[0]);
    candidates.extend(pooled.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push(pooled[pooled.len() - 1] + 1.0);

    // Candidates ascend, so rejected counts only grow: sweep two cursors.
    let (mut gi, mut ii) = (0usize, 0usize);
    let mut best: Option<EerPoint> = None;
    for &theta in &candidates {
        while gi < g.len() && g[gi] < theta {
            gi += 1;
        }
        while ii < i.len() && i[ii] < theta {
            ii += 1;
        }
        let frr = gi as f64 / ng;
        let far = (i.len() - ii) as f64 / ni;
        let point = EerPoint {
            threshold: theta,
            eer: (far + frr) / 2.0,
            far,
            frr,
        };
        match best {
            Some(b) if (b.far - b.frr).abs() <= (far - frr).abs() => {}
            _ => best = Some(point),
        }
    }
    Ok(best.expect("at least two candidates"))
}
