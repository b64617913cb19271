//! Normalised adversary scores.

use crate::detectors::DetectorVerdict;
use crate::error::{Error, Result};

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// `clip₀¹((U − A) / (U − W))` with `U` the unattacked mean, `A` the
/// attacked mean and `W` the lowest mean return among the attacks of the
/// same environment and budget class. `W = U` gives 0.
pub fn adversary_score(unattacked_mean: f64, attacked_mean: f64, worst_mean: f64) -> f64 {
    let span = unattacked_mean - worst_mean;
    if span <= 0.0 {
        return 0.0;
    }
    clip01((unattacked_mean - attacked_mean) / span)
}

/// Like [`adversary_score`], but episodes classified as attacked contribute
/// no return reduction. Capped at the unadjusted score: zeroing a detected
/// episode that did better than `U` would otherwise raise it.
pub fn detection_adjusted_score(
    returns: &[f64],
    verdicts: &[DetectorVerdict],
    unattacked_mean: f64,
    worst_mean: f64,
) -> Result<f64> {
    if returns.len() != verdicts.len() {
        return Err(Error::Config(format!(
            "{} returns but {} verdicts",
            returns.len(),
            verdicts.len()
        )));
    }
    let span = unattacked_mean - worst_mean;
    if span <= 0.0 || returns.is_empty() {
        return Ok(0.0);
    }
    let reduction: f64 = returns
        .iter()
        .zip(verdicts)
        .map(|(r, v)| if v.attacked { 0.0 } else { unattacked_mean - r })
        .sum::<f64>()
        / returns.len() as f64;
    let attacked_mean = returns.iter().sum::<f64>() / returns.len() as f64;
    Ok(clip01(reduction / span).min(adversary_score(unattacked_mean, attacked_mean, worst_mean)))
}
