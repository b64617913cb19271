//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::ActionMode;
use crate::attacks::{AttackBudget, AttackCheckpoint, AttackKind, AttackPolicy, MnpAttack};
use crate::envs::EnvKind;
use crate::error::{Error, Result};

/// One attack arm of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Report label; defaults to the kind.
    pub label: Option<String>,
    pub kind: AttackKind,
    pub budget: Option<f64>,
    pub epsilon: Option<f64>,
    /// Required for learned and tabular attacks.
    pub checkpoint: Option<PathBuf>,
}

impl AttackSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.to_string())
    }

    /// Builds the attack, loading its checkpoint when the kind needs one.
    pub fn resolve(&self, env: EnvKind, base: &Path) -> Result<ResolvedAttack> {
        let from_checkpoint = |path: &Option<PathBuf>| -> Result<AttackCheckpoint> {
            let path = path
                .as_ref()
                .ok_or_else(|| Error::MissingCheckpoint(format!("{} attack needs a checkpoint", self.kind)))?;
            let ckpt = AttackCheckpoint::load(&base.join(path))?;
            if ckpt.env != env {
                return Err(Error::Config(format!(
                    "{} checkpoint is for {}, experiment runs {env}",
                    path.display(),
                    ckpt.env
                )));
            }
            if ckpt.kind != self.kind {
                return Err(Error::Config(format!(
                    "{} holds a {} attack, config says {}",
                    path.display(),
                    ckpt.kind,
                    self.kind
                )));
            }
            Ok(ckpt)
        };
        let (policy, budget, epsilon) = match self.kind {
            AttackKind::Identity => (AttackPolicy::Identity, None, None),
            AttackKind::PerfectIllusory => (AttackPolicy::PerfectIllusory, None, None),
            AttackKind::Mnp => {
                let b = self
                    .budget
                    .ok_or_else(|| Error::Config("mnp attack needs a budget".into()))?;
                (AttackPolicy::Mnp(MnpAttack::new(AttackBudget::new(b)?)), Some(b), None)
            }
            _ => {
                let ckpt = from_checkpoint(&self.checkpoint)?;
                let budget = ckpt.attack.budget().map(AttackBudget::radius);
                (ckpt.attack, budget, ckpt.epsilon)
            }
        };
        Ok(ResolvedAttack {
            label: self.label(),
            kind: self.kind,
            policy,
            budget,
            epsilon: epsilon.or(self.epsilon),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAttack {
    pub label: String,
    pub kind: AttackKind,
    pub policy: AttackPolicy,
    pub budget: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub victim: PathBuf,
    pub detector: Option<PathBuf>,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub victim_mode: ActionMode,
    /// Budget of the class whose worst attack anchors the score; defaults
    /// to the budget of the first budgeted arm.
    pub budget_class: Option<f64>,
    #[serde(default = "default_true")]
    pub write_trajectories: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: Self = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_seed == 0 {
            return Err(Error::Config("episodes_per_seed must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let mut labels: Vec<String> = self.attacks.iter().map(AttackSpec::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.attacks.len() {
            return Err(Error::Config("attack labels must be distinct".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
env = "cartpole"
victim = "victim.json"
detector = "detector.json"
episodes_per_seed = 200
seeds = [1, 2, 3]
output_dir = "out"

[[attacks]]
kind = "mnp"
budget = 0.2

[[attacks]]
kind = "samdp"
checkpoint = "samdp.json"
"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(c.attacks.len(), 2);
        assert_eq!(c.victim_mode, ActionMode::Stochastic);
        assert!(c.write_trajectories);
        let dup = EXAMPLE.replace("[1, 2, 3]", "[1, 1]");
        assert!(ExperimentConfig::from_toml_str(&dup).is_err());
        let zero = EXAMPLE.replace("= 200", "= 0");
        assert!(ExperimentConfig::from_toml_str(&zero).is_err());
    }

    #[test]
    fn learned_attack_without_checkpoint_is_missing() {
        let spec = AttackSpec {
            label: None,
            kind: AttackKind::Samdp,
            budget: Some(0.2),
            epsilon: None,
            checkpoint: None,
        };
        assert!(matches!(
            spec.resolve(EnvKind::Cartpole, Path::new(".")),
            Err(Error::MissingCheckpoint(_))
        ));
    }
}
