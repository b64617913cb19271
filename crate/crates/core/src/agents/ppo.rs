//! Clipped-ratio actor-critic with generalised advantage estimation.
//!
//! The learner is generic over [`Task`], so the same code trains victims on
//! raw environments and adversaries on attack wrappers around a frozen victim.

use rand::seq::SliceRandom;

use super::policy::{ActionMode, Policy};
use super::TrainConfig;
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Activation, Adam, Mlp};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode ended in a terminal state (no bootstrapping).
    pub terminated: bool,
    /// Episode cut by the horizon (bootstrap from `obs`).
    pub truncated: bool,
}

/// Gym-style episodic task driven by a learner.
pub trait Task {
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn reset(&mut self, rng: &mut Rng) -> Result<Vec<f64>>;
    fn step(&mut self, action: &Action, rng: &mut Rng) -> Result<TaskStep>;
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    /// Undiscounted task return of every completed episode, in order.
    pub episode_returns: Vec<f64>,
    pub env_steps: usize,
    pub updates: usize,
}

impl TrainStats {
    pub fn recent_mean(&self, n: usize) -> Option<f64> {
        if self.episode_returns.is_empty() {
            return None;
        }
        let tail = &self.episode_returns[self.episode_returns.len().saturating_sub(n)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

pub fn value_net(obs_dim: usize, hidden: &[usize], rng: &mut Rng) -> Mlp {
    let mut sizes = vec![obs_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Mlp::new(&sizes, Activation::Tanh, 1.0, rng)
}

struct Buffer {
    obs: Vec<Vec<f64>>,
    actions: Vec<Action>,
    logp: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    episode_end: Vec<bool>,
}

impl Buffer {
    fn with_capacity(n: usize) -> Self {
        Self {
            obs: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            logp: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            next_values: Vec::with_capacity(n),
            episode_end: Vec::with_capacity(n),
        }
    }

    fn advantages(&self, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = self.rewards.len();
        let mut adv = vec![0.0; n];
        let mut running = 0.0;
        for t in (0..n).rev() {
            if self.episode_end[t] {
                running = 0.0;
            }
            let delta = self.rewards[t] + gamma * self.next_values[t] - self.values[t];
            running = delta + gamma * lambda * running;
            adv[t] = running;
        }
        adv
    }
}

/// Trains `policy` and `value` in place for `config.total_steps` task steps.
/// `after_update` runs after every policy update; returning `false` stops
/// training early.
pub fn train_ppo<T: Task>(
    task: &mut T,
    policy: &mut Policy,
    value: &mut Mlp,
    config: &TrainConfig,
    rng: &mut Rng,
    mut after_update: impl FnMut(&Policy, &TrainStats) -> bool,
) -> Result<TrainStats> {
    config.validate()?;
    if policy.obs_dim() != task.obs_dim() || value.input_dim() != task.obs_dim() {
        return Err(Error::Config("policy/value input size does not match task".into()));
    }
    let mut stats = TrainStats::default();
    let mut policy_opt = Adam::new(policy.num_params(), config.learning_rate);
    let mut value_opt = Adam::new(value.num_params(), config.value_learning_rate.unwrap_or(config.learning_rate));
    let total_updates = config.total_steps.div_ceil(config.rollout_steps).max(1);

    let mut obs = task.reset(rng)?;
    let mut episode_return = 0.0;
    for update in 0..total_updates {
        let progress = update as f64 / total_updates as f64;
        let lr_scale = if config.anneal_lr { 1.0 - progress } else { 1.0 };
        policy_opt.lr = config.learning_rate * lr_scale;
        value_opt.lr = config.value_learning_rate.unwrap_or(config.learning_rate) * lr_scale;

        let mut buf = Buffer::with_capacity(config.rollout_steps);
        for _ in 0..config.rollout_steps {
            let action = policy.act(&obs, ActionMode::Stochastic, rng);
            let logp = policy.log_prob(&obs, &action)?;
            let v = value.forward(&obs)[0];
            let step = task.step(&action, rng)?;
            episode_return += step.reward;
            stats.env_steps += 1;
            let next_v = if step.terminated { 0.0 } else { value.forward(&step.obs)[0] };
            buf.obs.push(std::mem::take(&mut obs));
            buf.actions.push(action);
            buf.logp.push(logp);
            buf.rewards.push(step.reward * config.reward_scale);
            buf.values.push(v);
            buf.next_values.push(next_v);
            let end = step.terminated || step.truncated;
            buf.episode_end.push(end);
            if end {
                stats.episode_returns.push(episode_return);
                episode_return = 0.0;
                obs = task.reset(rng)?;
            } else {
                obs = step.obs;
            }
        }

        let adv = buf.advantages(config.gamma, config.gae_lambda);
        let returns: Vec<f64> = adv.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
        let adv_norm: Vec<f64> = adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect();

        let mut indices: Vec<usize> = (0..buf.obs.len()).collect();
        let mut params = policy.params();
        let mut pgrad = vec![0.0; policy.num_params()];
        let mut vgrad = vec![0.0; value.num_params()];
        for _ in 0..config.epochs {
            indices.shuffle(rng);
            for batch in indices.chunks(config.minibatch_size) {
                pgrad.iter_mut().for_each(|g| *g = 0.0);
                vgrad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let new_logp = policy.log_prob(&buf.obs[i], &buf.actions[i])?;
                    let ratio = (new_logp - buf.logp[i]).exp();
                    let a = adv_norm[i];
                    let clipped = (a > 0.0 && ratio > 1.0 + config.clip_range)
                        || (a < 0.0 && ratio < 1.0 - config.clip_range);
                    // Minimise −surrogate − c_ent·H.
                    let coef_logp = if clipped { 0.0 } else { -ratio * a * scale };
                    policy.accumulate_grad(
                        &buf.obs[i],
                        &buf.actions[i],
                        coef_logp,
                        -config.entropy_coef * scale,
                        &mut pgrad,
                    )?;
                    let trace = value.forward_trace(&buf.obs[i]);
                    let err = trace.output()[0] - returns[i];
                    value.backward(&trace, &[err * scale], &mut vgrad);
                }
                clip_grad_norm(&mut pgrad, config.max_grad_norm);
                clip_grad_norm(&mut vgrad, config.max_grad_norm);
                policy_opt.step(&mut params, &pgrad);
                policy.set_params(&params);
                value_opt.step(value.params_mut(), &vgrad);
            }
        }
        stats.updates += 1;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingFailure("policy parameters became non-finite".into()));
        }
        if !after_update(policy, &stats) {
            break;
        }
    }
    Ok(stats)
}
