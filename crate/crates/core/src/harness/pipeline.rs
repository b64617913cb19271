//! End-to-end run on one environment: victim, detector, attacks, evaluation.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::ResolvedAttack;
use super::experiment::{run_arms, Experiment, RunReport};
use crate::agents::{evaluate_return, rollout_episode, train_victim, ActionMode, Policy, TrainConfig, TrainedVictim};
use crate::attacks::{
    train_epsilon_illusory, train_samdp_adversary, AdversaryConfig, AttackBudget, AttackKind, AttackPolicy,
    BudgetAnchor, DualConfig, MnpAttack, BUDGET_TOL,
};
use crate::detectors::{fit_detector, Detector, DetectorCheckpoint, DetectorConfig};
use crate::envs::{l2_distance, Env, EnvKind};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub env: EnvKind,
    pub budget: f64,
    pub seed: u64,
    pub victim: TrainConfig,
    pub detector: DetectorConfig,
    pub detector_train_episodes: usize,
    pub detector_calibration_episodes: usize,
    pub samdp: AdversaryConfig,
    pub illusory: AdversaryConfig,
    /// ε for the illusory attack; derived from the detector's drift when
    /// absent.
    pub epsilon: Option<f64>,
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_env(EnvKind::Cartpole)
    }
}

impl PipelineConfig {
    pub fn for_env(env: EnvKind) -> Self {
        let mut illusory = AdversaryConfig::for_env(env);
        illusory.anchor = BudgetAnchor::Prediction;
        illusory.deviation_scale = 0.1;
        illusory.dual = DualConfig {
            lambda0: 100.0,
            step_size: 1.0,
            ..DualConfig::default()
        };
        Self {
            env,
            budget: 0.2,
            seed: 0,
            victim: TrainConfig::victim_default(env),
            detector: DetectorConfig::default(),
            detector_train_episodes: 200,
            detector_calibration_episodes: 1000,
            samdp: AdversaryConfig::for_env(env),
            illusory,
            epsilon: None,
            episodes_per_seed: 200,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub victim: Duration,
    pub detector: Duration,
    pub attacks: Duration,
    pub evaluation: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.victim + self.detector + self.attacks + self.evaluation
    }
}

pub struct PipelineOutcome {
    pub env: Env,
    pub victim: TrainedVictim,
    pub detector: Detector,
    pub detector_checkpoint: DetectorCheckpoint,
    pub epsilon: f64,
    pub attacks: Vec<ResolvedAttack>,
    pub report: RunReport,
    pub times: StageTimes,
}

fn resolved(label: &str, kind: AttackKind, policy: AttackPolicy, epsilon: Option<f64>) -> ResolvedAttack {
    ResolvedAttack {
        label: label.to_string(),
        kind,
        budget: policy.budget().map(AttackBudget::radius),
        policy,
        epsilon,
    }
}

/// Trains every component from scratch and evaluates the unattacked victim
/// against identity, MNP (discrete actions only), SA-MDP, ε-illusory and
/// perfect illusory attacks.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    if config.env == EnvKind::OneStep {
        return Err(Error::Unsupported("the one-step MDP has its own exact pipeline".into()));
    }
    let env = Env::from_kind(config.env);
    let budget = AttackBudget::new(config.budget)?;
    let mut times = StageTimes::default();

    let clock = Instant::now();
    let victim = train_victim(&env, &config.victim.clone().with_seed(derive_seed(config.seed, 0)))?;
    times.victim = clock.elapsed();

    let clock = Instant::now();
    let mode = ActionMode::Stochastic;
    let train = evaluate_return(&env, &victim.policy, None, config.detector_train_episodes, derive_seed(config.seed, 1), mode)?;
    let calib = evaluate_return(
        &env,
        &victim.policy,
        None,
        config.detector_calibration_episodes,
        derive_seed(config.seed, 2),
        mode,
    )?;
    let detector = fit_detector(&env, &train.trajectories, &calib.trajectories, &config.detector)?;
    let detector_checkpoint =
        DetectorCheckpoint::new(&env, &detector, &train.trajectories, &calib.trajectories, &config.detector)?;
    times.detector = clock.elapsed();

    let clock = Instant::now();
    let epsilon = config.epsilon.unwrap_or_else(|| detector.drift_epsilon());
    let mut samdp_cfg = config.samdp.clone();
    samdp_cfg.train.seed = derive_seed(config.seed, 3);
    let samdp = train_samdp_adversary(&env, &victim.policy, budget, &samdp_cfg)?;
    let mut illusory_cfg = config.illusory.clone();
    illusory_cfg.train.seed = derive_seed(config.seed, 4);
    let illusory = train_epsilon_illusory(&env, &victim.policy, epsilon, budget, &illusory_cfg)?;
    times.attacks = clock.elapsed();

    let mut attacks = vec![resolved("identity", AttackKind::Identity, AttackPolicy::Identity, None)];
    if env.spec().action_space.is_discrete() {
        attacks.push(resolved("mnp", AttackKind::Mnp, AttackPolicy::Mnp(MnpAttack::new(budget)), None));
    }
    attacks.push(resolved("samdp", AttackKind::Samdp, AttackPolicy::Learned(samdp.attack), None));
    attacks.push(resolved(
        "epsilon-illusory",
        AttackKind::EpsilonIllusory,
        AttackPolicy::Learned(illusory.attack),
        Some(epsilon),
    ));
    attacks.push(resolved("perfect-illusory", AttackKind::PerfectIllusory, AttackPolicy::PerfectIllusory, None));

    let clock = Instant::now();
    let exp = Experiment {
        env: &env,
        victim: &victim.policy,
        detector: Some(&detector),
        attacks: &attacks,
        episodes_per_seed: config.episodes_per_seed,
        seeds: &config.seeds,
        victim_mode: mode,
        budget_class: Some(config.budget),
    };
    let (report, _) = run_arms(&exp, false)?;
    times.evaluation = clock.elapsed();
    Ok(PipelineOutcome {
        env,
        victim,
        detector,
        detector_checkpoint,
        epsilon,
        attacks,
        report,
        times,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub steps: usize,
    pub violations: usize,
    /// Largest normalised perturbation norm seen.
    pub max_norm: f64,
}

/// Rolls out fresh attacked episodes until at least `min_steps` steps are
/// logged and checks every logged observation against the attack's budget.
pub fn budget_audit(
    env: &Env,
    victim: &Policy,
    attack: &AttackPolicy,
    min_steps: usize,
    seed: u64,
) -> Result<BudgetAudit> {
    let budget = attack
        .budget()
        .ok_or_else(|| Error::Config(format!("{} attack has no budget", attack.kind())))?;
    let mut audit = BudgetAudit {
        steps: 0,
        violations: 0,
        max_norm: 0.0,
    };
    let mut episode = 0;
    while audit.steps < min_steps {
        let traj = rollout_episode(env, victim, Some(attack), episode, derive_seed(seed, episode as u64), ActionMode::Stochastic)?;
        episode += 1;
        for r in &traj.records {
            let norm = l2_distance(&env.normalize(&r.observation), &env.normalize(&r.state));
            audit.steps += 1;
            audit.violations += usize::from(norm > budget.radius() + BUDGET_TOL);
            audit.max_norm = audit.max_norm.max(norm);
        }
    }
    Ok(audit)
}
