//! Hypothesis tests and the operational detector: a learned dynamics-model
//! scorer feeding a CUSUM rule calibrated to a target per-episode false
//! positive rate.

mod checkpoint;
mod cusum;
mod dynamics;
mod hypothesis;

pub use checkpoint::{dataset_hash, DetectorCheckpoint};
pub use cusum::{calibrate_cusum, cusum_run, DecisionRuleParams, DetectorVerdict, MIN_CALIBRATION_EPISODES};
pub use dynamics::{observed_transitions, train_dynamics_scorer, DynamicsScorer, ScorerConfig, Transition};
pub use hypothesis::{
    binary_relative_entropy, llr_decide, wald_sequential, Hypothesis, WaldBounds, WaldDecision, WaldOutcome,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, Trajectory};
use crate::error::{Error, Result};

/// Target per-episode false positive rate used throughout.
pub const DEFAULT_TARGET_FPR: f64 = 0.03;

/// Calibrated scorer plus decision rule. An episode is attacked iff any
/// alarm fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub scorer: DynamicsScorer,
    pub params: DecisionRuleParams,
}

impl Detector {
    pub fn verdict(&self, env: &Env, traj: &Trajectory) -> DetectorVerdict {
        let scores = self.scorer.score_episode(env, traj);
        cusum_run(&scores, self.params.mu_ref, self.params.kappa, self.params.h)
    }

    pub fn verdicts(&self, env: &Env, trajectories: &[Trajectory]) -> Vec<DetectorVerdict> {
        trajectories.par_iter().map(|t| self.verdict(env, t)).collect()
    }

    /// Per-step squared deviation (normalised units) whose score increase
    /// equals the CUSUM drift κ when spread over dimensions in proportion
    /// to the model's residual scales. Persistent deviations below it do not
    /// accumulate.
    pub fn drift_epsilon(&self) -> f64 {
        let s = &self.scorer;
        let d = s.sigma.len() as f64;
        let var: f64 = s.sigma.iter().zip(&s.target_std).map(|(a, b)| (a * b).powi(2)).sum();
        2.0 * self.params.kappa / d * var
    }

    pub fn detection_rate(&self, env: &Env, trajectories: &[Trajectory]) -> f64 {
        if trajectories.is_empty() {
            return 0.0;
        }
        let hits = self.verdicts(env, trajectories).iter().filter(|v| v.attacked).count();
        hits as f64 / trajectories.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub scorer: ScorerConfig,
    pub target_fpr: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerConfig::default(),
            target_fpr: DEFAULT_TARGET_FPR,
        }
    }
}

/// Trains the scorer on `train` and calibrates the rule on the disjoint
/// held-out episodes `calibration`.
pub fn fit_detector(
    env: &Env,
    train: &[Trajectory],
    calibration: &[Trajectory],
    config: &DetectorConfig,
) -> Result<Detector> {
    if calibration.len() < MIN_CALIBRATION_EPISODES {
        return Err(Error::InsufficientData(format!(
            "{} calibration episodes, need {MIN_CALIBRATION_EPISODES}",
            calibration.len()
        )));
    }
    let scorer = train_dynamics_scorer(env, train, &config.scorer)?;
    let scores: Vec<Vec<f64>> = calibration.par_iter().map(|t| scorer.score_episode(env, t)).collect();
    let params = calibrate_cusum(&scores, config.target_fpr)?;
    Ok(Detector { scorer, params })
}
