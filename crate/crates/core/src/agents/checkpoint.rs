use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Policy, TrainConfig};
use crate::envs::EnvKind;
use crate::error::{Error, Result};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
}

/// JSON parameter dump with the architecture and training config embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub env: EnvKind,
    pub policy: Policy,
    pub train_config: TrainConfig,
    pub evaluation: Option<EvalSummary>,
    pub param_hash: String,
}

impl PolicyCheckpoint {
    pub fn new(env: EnvKind, policy: Policy, train_config: TrainConfig, evaluation: Option<(f64, f64)>) -> Self {
        let param_hash = policy.param_hash();
        Self {
            format_version: POLICY_FORMAT_VERSION,
            env,
            policy,
            train_config,
            evaluation: evaluation.map(|(mean, std)| EvalSummary { mean, std }),
            param_hash,
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
        if ckpt.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "policy checkpoint format {} is not supported",
                ckpt.format_version
            )));
        }
        if ckpt.policy.param_hash() != ckpt.param_hash {
            return Err(Error::Config(format!("{} does not match its parameter hash", path.display())));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("victim.json");
        let policy = Policy::gaussian_mlp(3, &[4], vec![-2.0], vec![2.0], -0.5, &mut seeded(0));
        let ckpt = PolicyCheckpoint::new(EnvKind::Pendulum, policy, TrainConfig::default(), Some((1.0, 0.5)));
        ckpt.save(&path).unwrap();
        assert_eq!(PolicyCheckpoint::load(&path).unwrap(), ckpt);
        assert!(matches!(
            PolicyCheckpoint::load(&dir.path().join("absent.json")),
            Err(Error::MissingCheckpoint(_))
        ));
    }
}
