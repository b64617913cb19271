//! Victim policies: representation, training and frozen evaluation. The
//! learners here are reused by the learned attacks.

mod checkpoint;
mod eval;
mod policy;
mod ppo;
mod tabular;

pub use checkpoint::{EvalSummary, PolicyCheckpoint};
pub(crate) use eval::mean_std;
pub use eval::{evaluate_return, rollout_episode, Evaluation};
pub use policy::{argmax, gaussian_log_density, sample_categorical, ActionDist, ActionMode, Policy, MIN_STD};
pub use ppo::{train_ppo, value_net, Task, TaskStep, TrainStats};
pub(crate) use tabular::action_probs;
pub use tabular::{one_step_expected_return, one_step_return_gradient, train_reinforce_tabular};

use serde::{Deserialize, Serialize};

use crate::envs::{Action, ActionSpace, Env, EnvKind, EnvState};
use crate::error::{Error, Result};
use crate::rng::{child, derive_seed, Rng};

/// Learner settings. Only the first six fields matter to the tabular
/// REINFORCE learner; the rest configure the clipped actor-critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub rollout_steps: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub seed: u64,
    pub value_learning_rate: Option<f64>,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub max_grad_norm: f64,
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub anneal_lr: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            rollout_steps: 2048,
            learning_rate: 3e-4,
            gamma: 0.99,
            entropy_coef: 0.0,
            seed: 0,
            value_learning_rate: None,
            epochs: 10,
            minibatch_size: 64,
            gae_lambda: 0.95,
            clip_range: 0.2,
            max_grad_norm: 0.5,
            reward_scale: 1.0,
            hidden: vec![64, 64],
            init_log_std: 0.0,
            anneal_lr: true,
        }
    }
}

impl TrainConfig {
    /// Settings that reliably produce competent victims at desk scale.
    pub fn victim_default(kind: EnvKind) -> Self {
        match kind {
            EnvKind::OneStep => Self {
                total_steps: 20_000,
                rollout_steps: 1,
                learning_rate: 0.5,
                ..Self::default()
            },
            EnvKind::Cartpole => Self {
                total_steps: 250_000,
                rollout_steps: 2048,
                learning_rate: 1e-3,
                epochs: 10,
                minibatch_size: 64,
                hidden: vec![32, 32],
                ..Self::default()
            },
            EnvKind::Pendulum => Self {
                total_steps: 600_000,
                rollout_steps: 4096,
                learning_rate: 1e-3,
                gamma: 0.95,
                epochs: 10,
                minibatch_size: 128,
                reward_scale: 0.1,
                hidden: vec![64, 64],
                init_log_std: -0.5,
                ..Self::default()
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.rollout_steps == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("step counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        Ok(())
    }
}

/// Minimum evaluation return a trained victim must reach.
pub fn competence_threshold(kind: EnvKind) -> f64 {
    match kind {
        EnvKind::OneStep => 1.0 - 1e-12,
        EnvKind::Cartpole => 450.0,
        EnvKind::Pendulum => -250.0,
    }
}

/// Number of evaluation episodes behind the competence check.
pub const COMPETENCE_EPISODES: usize = 200;

#[derive(Debug, Clone)]
pub struct TrainedVictim {
    pub policy: Policy,
    pub config: TrainConfig,
    pub stats: TrainStats,
    /// Mean evaluation return used for the competence check.
    pub eval_mean: f64,
    pub eval_std: f64,
}

impl TrainedVictim {
    pub fn checkpoint(&self, env: EnvKind) -> PolicyCheckpoint {
        PolicyCheckpoint::new(env, self.policy.clone(), self.config.clone(), Some((self.eval_mean, self.eval_std)))
    }
}

/// Environment wrapper presenting normalised observations to a learner.
pub struct VictimTask<'a> {
    env: &'a Env,
    state: EnvState,
    t: usize,
}

impl<'a> VictimTask<'a> {
    pub fn new(env: &'a Env) -> Self {
        Self {
            env,
            state: EnvState(vec![0.0; env.state_dim()]),
            t: 0,
        }
    }
}

impl Task for VictimTask<'_> {
    fn obs_dim(&self) -> usize {
        self.env.state_dim()
    }

    fn action_space(&self) -> ActionSpace {
        self.env.spec().action_space
    }

    fn reset(&mut self, rng: &mut Rng) -> Result<Vec<f64>> {
        self.state = self.env.reset(rng);
        self.t = 0;
        Ok(self.env.normalize(&self.state))
    }

    fn step(&mut self, action: &Action, rng: &mut Rng) -> Result<TaskStep> {
        let step = self.env.step(&self.state, self.t, action, rng)?;
        self.t += 1;
        self.state = step.state;
        let truncated = step.done && self.t >= self.env.horizon();
        Ok(TaskStep {
            obs: self.env.normalize(&self.state),
            reward: step.reward,
            terminated: step.done && !truncated,
            truncated,
        })
    }
}

/// Trains a victim in the unattacked environment and checks it against the
/// per-environment competence threshold. A victim below threshold is
/// reported as [`Error::TrainingFailure`], never returned silently.
pub fn train_victim(env: &Env, config: &TrainConfig) -> Result<TrainedVictim> {
    let kind = env.kind();
    let mut rng = child(config.seed, 0);
    let (policy, stats) = match kind {
        EnvKind::OneStep => train_reinforce_tabular(env, config, &mut rng)?,
        _ => {
            config.validate()?;
            let spec = env.spec();
            let mut policy = Policy::for_action_space(
                env.state_dim(),
                &config.hidden,
                &spec.action_space,
                config.init_log_std,
                &mut rng,
            );
            let mut value = value_net(env.state_dim(), &config.hidden, &mut rng);
            let mut task = VictimTask::new(env);
            let stats = train_ppo(&mut task, &mut policy, &mut value, config, &mut rng, |_, _| true)?;
            (policy, stats)
        }
    };

    let (eval_mean, eval_std) = match kind {
        EnvKind::OneStep => {
            let Env::OneStep(mdp) = env else { unreachable!() };
            (one_step_expected_return(mdp, &policy, ActionMode::Greedy, None)?, 0.0)
        }
        _ => {
            let eval = evaluate_return(
                env,
                &policy,
                None,
                COMPETENCE_EPISODES,
                derive_seed(config.seed, 1),
                ActionMode::Stochastic,
            )?;
            (eval.mean, eval.std)
        }
    };
    let threshold = competence_threshold(kind);
    if eval_mean < threshold {
        return Err(Error::TrainingFailure(format!(
            "{kind} victim reached mean return {eval_mean:.3} (threshold {threshold}) after {} steps",
            stats.env_steps
        )));
    }
    Ok(TrainedVictim {
        policy,
        config: config.clone(),
        stats,
        eval_mean,
        eval_std,
    })
}
