use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdversaryConfig, AttackKind, AttackPolicy};
use crate::envs::EnvKind;
use crate::error::{Error, Result};

pub const ATTACK_FORMAT_VERSION: u32 = 1;

/// Self-describing attack dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCheckpoint {
    pub format_version: u32,
    pub env: EnvKind,
    /// Reported attack class. A tabular dual-ascent result is reported as
    /// `epsilon-illusory` although its mechanism is a table.
    pub kind: AttackKind,
    pub attack: AttackPolicy,
    pub budget: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    /// Constraint value measured at the end of training (exact KL on the
    /// one-step MDP, the consistency surrogate elsewhere).
    pub measured_kl: Option<f64>,
    pub train_config: Option<AdversaryConfig>,
}

impl AttackCheckpoint {
    pub fn new(env: EnvKind, kind: AttackKind, attack: AttackPolicy) -> Self {
        let budget = attack.budget().map(|b| b.radius());
        Self {
            format_version: ATTACK_FORMAT_VERSION,
            env,
            kind,
            attack,
            budget,
            epsilon: None,
            lambda: None,
            measured_kl: None,
            train_config: None,
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
        if ckpt.format_version != ATTACK_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "attack checkpoint format {} is not supported",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
