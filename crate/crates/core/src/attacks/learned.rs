//! Learned adversaries trained with the clipped actor-critic against a
//! frozen victim.

use serde::{Deserialize, Serialize};

use super::budget::{clip_unit_ball, AttackBudget};
use super::dual::{dual_update, penalised_reward, DualConfig, DualState};
use super::{step_inconsistency, AttackSession};
use crate::agents::{train_ppo, value_net, ActionMode, Policy, Task, TaskStep, TrainConfig, TrainStats};
use crate::envs::{Action, ActionSpace, Env, EnvKind, EnvState};
use crate::error::{Error, Result};
use crate::rng::{child, Rng};

/// What the adversary conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// The true state only.
    State,
    /// True state, predicted observation, previous emitted observation and
    /// previous victim action.
    Consistency,
}

impl FeatureSet {
    pub fn dim(self, env: &Env) -> usize {
        let d = env.state_dim();
        match self {
            FeatureSet::State => d,
            FeatureSet::Consistency => 3 * d + env.spec().action_space.encoded_dim() + 1,
        }
    }
}

/// Point the perturbation radius is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAnchor {
    /// `o = s + B·δ`.
    #[default]
    State,
    /// `o = Π(p + r·δ)` with `p` the dynamics prediction (the true state on
    /// the first step), `r` the deviation radius and `Π` the projection onto
    /// the budget ball around the true state. `δ = 0` follows the dynamics.
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedAttack {
    /// Gaussian policy over a perturbation direction in `[-1, 1]^d`.
    pub policy: Policy,
    pub budget: AttackBudget,
    pub anchor: BudgetAnchor,
    pub features: FeatureSet,
    /// How perturbations are drawn once training is over.
    pub deploy_mode: ActionMode,
    /// Radius of the deviation from the prediction, as a fraction of the
    /// budget. Only used with [`BudgetAnchor::Prediction`].
    #[serde(default = "unit")]
    pub deviation_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl LearnedAttack {
    fn feature_vector(&self, env: &Env, session: &AttackSession, state: &EnvState, prediction: &[f64]) -> Vec<f64> {
        let s = env.normalize(state);
        match self.features {
            FeatureSet::State => s,
            FeatureSet::Consistency => {
                let pred = env.normalize(prediction);
                let space = env.spec().action_space;
                let mut f = s.clone();
                f.extend(pred.iter().zip(&s).map(|(p, x)| p - x));
                match (&session.prev_obs, &session.prev_action) {
                    (Some(o), Some(a)) => {
                        f.extend(env.normalize(o));
                        f.extend(a.encode(&space));
                        f.push(0.0);
                    }
                    _ => {
                        f.extend(std::iter::repeat_n(0.0, s.len() + space.encoded_dim()));
                        f.push(1.0);
                    }
                }
                f
            }
        }
    }

    /// Maps a raw policy output to the emitted observation.
    fn apply(&self, env: &Env, session: &AttackSession, state: &EnvState, prediction: &[f64], delta: &[f64]) -> EnvState {
        let mut d = delta.to_vec();
        clip_unit_ball(&mut d);
        let s = env.normalize(state);
        let offset: Vec<f64> = match self.anchor {
            BudgetAnchor::State => d.iter().map(|x| x * self.budget.radius()).collect(),
            BudgetAnchor::Prediction => {
                let centre = if session.t == 0 { s.clone() } else { env.normalize(prediction) };
                let r = self.deviation_scale * self.budget.radius();
                let mut off: Vec<f64> = centre.iter().zip(&d).zip(&s).map(|((c, x), s)| c + r * x - s).collect();
                self.budget.project(&mut off);
                off
            }
        };
        let o_n: Vec<f64> = s.iter().zip(&offset).map(|(a, x)| a + x).collect();
        EnvState(env.denormalize(&o_n))
    }

    pub(super) fn emit(&self, env: &Env, session: &AttackSession, state: &EnvState, rng: &mut Rng) -> Result<EnvState> {
        let prediction = session.prediction(env, rng)?;
        let features = self.feature_vector(env, session, state, &prediction);
        let Action::Continuous(delta) = self.policy.act(&features, self.deploy_mode, rng) else {
            return Err(Error::InvalidState("attack policy must be continuous".into()));
        };
        Ok(self.apply(env, session, state, &prediction, &delta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryConfig {
    pub train: TrainConfig,
    /// Victim action selection during adversary training.
    pub victim_mode: ActionMode,
    pub dual: DualConfig,
    pub anchor: BudgetAnchor,
    pub deploy_mode: ActionMode,
    /// See [`LearnedAttack::deviation_scale`].
    pub deviation_scale: f64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                total_steps: 200_000,
                rollout_steps: 2048,
                learning_rate: 3e-4,
                hidden: vec![64, 64],
                init_log_std: -0.5,
                ..TrainConfig::default()
            },
            victim_mode: ActionMode::Stochastic,
            dual: DualConfig::default(),
            anchor: BudgetAnchor::State,
            deploy_mode: ActionMode::Greedy,
            deviation_scale: 1.0,
        }
    }
}

impl AdversaryConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        let mut c = Self::default();
        match kind {
            EnvKind::Cartpole => {
                c.train.total_steps = 150_000;
                c.train.gamma = 0.99;
            }
            EnvKind::Pendulum => {
                c.train.total_steps = 300_000;
                c.train.gamma = 0.95;
                c.train.reward_scale = 0.1;
                c.train.rollout_steps = 4096;
                c.train.minibatch_size = 128;
            }
            EnvKind::OneStep => {}
        }
        c
    }
}

/// Environment seen by a learning adversary: the frozen victim acts on the
/// emitted observations and the adversary is rewarded with the negated
/// victim reward, minus the consistency penalty when a dual state is set.
pub struct AttackTask<'a> {
    env: &'a Env,
    victim: &'a Policy,
    victim_mode: ActionMode,
    attack: LearnedAttack,
    dual: Option<DualState>,
    lambda_cap: f64,
    state: EnvState,
    session: AttackSession,
    prediction: Vec<f64>,
    /// Mean consistency value of every finished episode.
    pub episode_violation: Vec<f64>,
    episode_sum: f64,
    lambda_trace: Vec<f64>,
}

impl<'a> AttackTask<'a> {
    pub fn new(
        env: &'a Env,
        victim: &'a Policy,
        victim_mode: ActionMode,
        attack: LearnedAttack,
        dual: Option<DualState>,
        lambda_cap: f64,
    ) -> Self {
        Self {
            env,
            victim,
            victim_mode,
            attack,
            dual,
            lambda_cap,
            state: EnvState(vec![0.0; env.state_dim()]),
            session: AttackSession::default(),
            prediction: env.initial_mean(),
            episode_violation: Vec::new(),
            episode_sum: 0.0,
            lambda_trace: Vec::new(),
        }
    }

    pub fn dual(&self) -> Option<&DualState> {
        self.dual.as_ref()
    }

    /// λ after every dual update.
    pub fn lambda_trace(&self) -> &[f64] {
        &self.lambda_trace
    }

    fn observe(&mut self, rng: &mut Rng) -> Result<Vec<f64>> {
        self.prediction = self.session.prediction(self.env, rng)?;
        Ok(self.attack.feature_vector(self.env, &self.session, &self.state, &self.prediction))
    }
}

impl Task for AttackTask<'_> {
    fn obs_dim(&self) -> usize {
        self.attack.features.dim(self.env)
    }

    fn action_space(&self) -> ActionSpace {
        let d = self.env.state_dim();
        ActionSpace::Box {
            low: vec![-1.0; d],
            high: vec![1.0; d],
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Result<Vec<f64>> {
        self.state = self.env.reset(rng);
        self.session = AttackSession::default();
        self.episode_sum = 0.0;
        self.observe(rng)
    }

    fn step(&mut self, action: &Action, rng: &mut Rng) -> Result<TaskStep> {
        let Action::Continuous(delta) = action else {
            return Err(Error::InvalidAction("adversary actions are continuous".into()));
        };
        let obs = self.attack.apply(self.env, &self.session, &self.state, &self.prediction, delta);
        let violation = step_inconsistency(self.env, self.session.t == 0, &obs, &self.prediction);
        self.session.prev_obs = Some(obs.clone());

        let victim_action = self.victim.act(&self.env.normalize(&obs), self.victim_mode, rng);
        let t = self.session.t;
        let step = self.env.step(&self.state, t, &victim_action, rng)?;
        self.session.record_action(&victim_action);
        self.episode_sum += violation;

        let reward = match &mut self.dual {
            Some(dual) => {
                dual.window.push(violation);
                penalised_reward(step.reward, violation, dual.lambda, dual.epsilon)
            }
            None => -step.reward,
        };

        let truncated = step.done && self.session.t >= self.env.horizon();
        let terminated = step.done && !truncated;
        self.state = step.state;
        if step.done {
            self.episode_violation.push(self.episode_sum / self.session.t as f64);
            if let Some(dual) = &mut self.dual {
                let surrogate = dual.window.mean();
                *dual = dual_update(dual, surrogate);
                self.lambda_trace.push(dual.lambda);
                if dual.lambda > self.lambda_cap || !dual.lambda.is_finite() {
                    return Err(Error::TrainingFailure(format!(
                        "λ diverged to {} (cap {})",
                        dual.lambda, self.lambda_cap
                    )));
                }
            }
        }
        // Truncated episodes are bootstrapped from the final features.
        let obs = if terminated { vec![0.0; self.obs_dim()] } else { self.observe(rng)? };
        Ok(TaskStep {
            obs,
            reward,
            terminated,
            truncated,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAttack {
    pub attack: LearnedAttack,
    pub stats: TrainStats,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    /// Mean per-step consistency surrogate over the final training episodes.
    pub measured_kl: f64,
    pub lambda_trace: Vec<f64>,
}

fn train_learned(
    env: &Env,
    victim: &Policy,
    budget: AttackBudget,
    features: FeatureSet,
    dual: Option<DualState>,
    config: &AdversaryConfig,
) -> Result<TrainedAttack> {
    config.train.validate()?;
    if victim.obs_dim() != env.state_dim() {
        return Err(Error::Config("victim does not match the environment".into()));
    }
    let mut rng = child(config.train.seed, 0);
    let d = env.state_dim();
    let obs_dim = features.dim(env);
    let policy = Policy::gaussian_mlp(
        obs_dim,
        &config.train.hidden,
        vec![-1.0; d],
        vec![1.0; d],
        config.train.init_log_std,
        &mut rng,
    );
    let anchor = match features {
        FeatureSet::State => BudgetAnchor::State,
        FeatureSet::Consistency => config.anchor,
    };
    let attack = LearnedAttack {
        policy,
        budget,
        anchor,
        features,
        deploy_mode: config.deploy_mode,
        deviation_scale: config.deviation_scale,
    };
    let epsilon = dual.as_ref().map(|d| d.epsilon);
    let mut task = AttackTask::new(env, victim, config.victim_mode, attack.clone(), dual, config.dual.lambda_cap);
    let mut policy = attack.policy.clone();
    let mut value = value_net(obs_dim, &config.train.hidden, &mut rng);
    let stats = train_ppo(&mut task, &mut policy, &mut value, &config.train, &mut rng, |_, _| true)?;
    let tail = &task.episode_violation[task.episode_violation.len().saturating_sub(20)..];
    let measured_kl = if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    Ok(TrainedAttack {
        attack: LearnedAttack { policy, ..attack },
        stats,
        lambda: task.dual().map(|d| d.lambda),
        epsilon,
        measured_kl,
        lambda_trace: task.lambda_trace().to_vec(),
    })
}

/// Budgeted adversary minimising the victim's return with no detectability
/// term.
pub fn train_samdp_adversary(
    env: &Env,
    victim: &Policy,
    budget: AttackBudget,
    config: &AdversaryConfig,
) -> Result<TrainedAttack> {
    train_learned(env, victim, budget, FeatureSet::State, None, config)
}

/// ε-illusory adversary: policy updates on the penalised reward alternate
/// with projected dual steps driven by the sliding-window surrogate.
pub fn train_epsilon_illusory(
    env: &Env,
    victim: &Policy,
    epsilon: f64,
    budget: AttackBudget,
    config: &AdversaryConfig,
) -> Result<TrainedAttack> {
    if matches!(env, Env::OneStep(_)) {
        return Err(Error::Unsupported(
            "use the exact dual-ascent trainer for the one-step MDP".into(),
        ));
    }
    let dual = DualState::new(&config.dual, epsilon)?;
    train_learned(env, victim, budget, FeatureSet::Consistency, Some(dual), config)
}
