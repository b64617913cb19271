use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DecisionRuleParams, Detector, DetectorConfig, DynamicsScorer};
use crate::envs::{Env, EnvKind, Trajectory};
use crate::error::{Error, Result};

pub const DETECTOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorCheckpoint {
    pub format_version: u32,
    pub env: EnvKind,
    pub scorer: DynamicsScorer,
    pub params: DecisionRuleParams,
    /// Alarm rate on the calibration episodes.
    pub calibration_fpr: f64,
    /// SHA-256 over the training and calibration episodes.
    pub dataset_hash: String,
    pub config: DetectorConfig,
}

/// SHA-256 of the JSON serialisation of `trajectories`.
pub fn dataset_hash(trajectories: &[&[Trajectory]]) -> Result<String> {
    let mut h = Sha256::new();
    for set in trajectories {
        for t in *set {
            h.update(serde_json::to_vec(t)?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

impl DetectorCheckpoint {
    /// Records a fitted detector with its calibration alarm rate and the hash
    /// of the episodes it was fitted on.
    pub fn new(
        env: &Env,
        detector: &Detector,
        train: &[Trajectory],
        calibration: &[Trajectory],
        config: &DetectorConfig,
    ) -> Result<Self> {
        Ok(Self {
            format_version: DETECTOR_FORMAT_VERSION,
            env: env.kind(),
            scorer: detector.scorer.clone(),
            params: detector.params.clone(),
            calibration_fpr: detector.detection_rate(env, calibration),
            dataset_hash: dataset_hash(&[train, calibration])?,
            config: config.clone(),
        })
    }

    pub fn detector(&self) -> Detector {
        Detector {
            scorer: self.scorer.clone(),
            params: self.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.display().to_string()));
        }
        let ckpt: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.format_version != DETECTOR_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "detector checkpoint format {} is not supported",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
