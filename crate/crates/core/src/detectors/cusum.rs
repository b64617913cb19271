//! CUSUM decision rule over per-step anomaly scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRuleParams {
    /// Threshold of the single-measurement likelihood-ratio rule.
    pub llr_threshold: f64,
    /// Reference (clean) mean score.
    pub mu_ref: f64,
    /// Drift subtracted every step.
    pub kappa: f64,
    /// Alarm threshold on the statistic.
    pub h: f64,
    pub target_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub attacked: bool,
    pub alarm_step: Option<usize>,
    pub max_statistic: f64,
}

/// `S₀ = 0`, `S_t = max(0, S_{t−1} + score_t − μ_ref − κ)`; the alarm is the
/// first step with `S_t > h`. The maximum statistic is taken over the whole
/// sequence.
pub fn cusum_run(scores: &[f64], mu_ref: f64, kappa: f64, h: f64) -> DetectorVerdict {
    let mut s = 0.0f64;
    let mut max = 0.0f64;
    let mut alarm = None;
    for (t, x) in scores.iter().enumerate() {
        s = (s + x - mu_ref - kappa).max(0.0);
        max = max.max(s);
        if alarm.is_none() && s > h {
            alarm = Some(t);
        }
    }
    DetectorVerdict {
        attacked: alarm.is_some(),
        alarm_step: alarm,
        max_statistic: max,
    }
}

/// Minimum number of held-out episodes for calibration.
pub const MIN_CALIBRATION_EPISODES: usize = 100;

/// Calibrates the rule on per-episode score sequences of held-out unattacked
/// episodes: `μ_ref` is their mean score, `κ` half their standard
/// deviation and `h` the `(1 − target_fpr)` empirical quantile of the
/// per-episode maximum statistics. Constant scores give `κ = 0` and the
/// smallest float above the largest statistic.
pub fn calibrate_cusum(episode_scores: &[Vec<f64>], target_fpr: f64) -> Result<DecisionRuleParams> {
    if !(target_fpr > 0.0 && target_fpr <= 1.0) {
        return Err(Error::Config(format!("target FPR {target_fpr} outside (0, 1]")));
    }
    if episode_scores.len() < MIN_CALIBRATION_EPISODES {
        return Err(Error::InsufficientData(format!(
            "{} calibration episodes, need {MIN_CALIBRATION_EPISODES}",
            episode_scores.len()
        )));
    }
    let all: Vec<f64> = episode_scores.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::InsufficientData("calibration episodes carry no scores".into()));
    }
    let n = all.len() as f64;
    let mu_ref = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mu_ref).powi(2)).sum::<f64>() / n;
    let degenerate = var == 0.0;
    let kappa = if degenerate { 0.0 } else { 0.5 * var.sqrt() };
    let mut maxima: Vec<f64> = episode_scores
        .iter()
        .map(|s| cusum_run(s, mu_ref, kappa, f64::INFINITY).max_statistic)
        .collect();
    maxima.sort_by(f64::total_cmp);
    let h = if degenerate {
        maxima[maxima.len() - 1].next_up()
    } else {
        let k = ((1.0 - target_fpr) * maxima.len() as f64).ceil() as usize;
        let h = if k == 0 { maxima[0].next_down() } else { maxima[k - 1] };
        h.max(f64::MIN_POSITIVE)
    };
    Ok(DecisionRuleParams {
        llr_threshold: 0.0,
        mu_ref,
        kappa,
        h,
        target_fpr,
    })
}
