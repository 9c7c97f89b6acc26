use crate::error::{Error, Result};

pub const SCORE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy against soft targets and its gradient with
/// respect to each (unclamped) score.
pub fn bce_loss(scores: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!("{} scores vs {} targets", scores.len(), targets.len())));
    }
    if scores.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &g) in scores.iter().zip(targets) {
        let s = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
        loss -= g * s.ln() + (1.0 - g) * (1.0 - s).ln();
        grad.push((s - g) / (s * (1.0 - s)) / n);
    }
    Ok((loss / n, grad))
}
