use rayon::prelude::*;

use super::policy::{ActionMode, Policy};
use crate::attacks::AttackPolicy;
use crate::envs::{Env, Trajectory, TransitionRecord};
use crate::error::{Error, Result};
use crate::rng::{child, derive_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    /// Population standard deviation of the episode returns.
    pub std: f64,
    pub returns: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

impl Evaluation {
    pub fn from_trajectories(trajectories: Vec<Trajectory>) -> Self {
        let returns: Vec<f64> = trajectories.iter().map(Trajectory::undiscounted_return).collect();
        let (mean, std) = mean_std(&returns);
        Self {
            mean,
            std,
            returns,
            trajectories,
        }
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rolls out one episode. The episode's generators are derived from `seed`
/// with separate streams for the environment, the victim and the attack,
/// so an attack that draws no randomness leaves the rest untouched.
pub fn rollout_episode(
    env: &Env,
    policy: &Policy,
    attack: Option<&AttackPolicy>,
    episode: usize,
    seed: u64,
    mode: ActionMode,
) -> Result<Trajectory> {
    let mut env_rng = child(seed, 0);
    let mut victim_rng = child(seed, 1);
    let mut attack_rng = child(seed, 2);
    let mut session = attack.map(|a| a.session(env)).transpose()?;
    let mut state = env.reset(&mut env_rng);
    let mut records = Vec::new();
    for t in 0..env.horizon() {
        let observation = match (attack, session.as_mut()) {
            (Some(a), Some(sess)) => a.emit(env, policy, sess, &state, &mut attack_rng)?,
            _ => state.clone(),
        };
        let action = policy.act(&env.normalize(&observation), mode, &mut victim_rng);
        let step = env.step(&state, t, &action, &mut env_rng)?;
        if let Some(sess) = session.as_mut() {
            sess.record_action(&action);
        }
        records.push(TransitionRecord {
            t,
            state: std::mem::replace(&mut state, step.state),
            observation,
            action,
            reward: step.reward,
            done: step.done,
        });
        if step.done {
            break;
        }
    }
    Ok(Trajectory { episode, seed, records })
}

/// Evaluates `policy` over `episodes` episodes in parallel. Episode `i`
/// uses the seed derived from `(seed, i)`, so results do not depend on
/// scheduling.
pub fn evaluate_return(
    env: &Env,
    policy: &Policy,
    attack: Option<&AttackPolicy>,
    episodes: usize,
    seed: u64,
    mode: ActionMode,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    let trajectories = (0..episodes)
        .into_par_iter()
        .map(|i| rollout_episode(env, policy, attack, i, derive_seed(seed, i as u64), mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation::from_trajectories(trajectories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use crate::rng::seeded;

    #[test]
    fn identity_attack_is_bitwise_transparent() {
        for kind in [EnvKind::OneStep, EnvKind::Cartpole, EnvKind::Pendulum] {
            let env = Env::from_kind(kind);
            let policy = Policy::for_action_space(
                env.state_dim(),
                &[8],
                &env.spec().action_space,
                0.0,
                &mut seeded(1),
            );
            let clean = evaluate_return(&env, &policy, None, 5, 11, ActionMode::Stochastic).unwrap();
            let ident =
                evaluate_return(&env, &policy, Some(&AttackPolicy::Identity), 5, 11, ActionMode::Stochastic).unwrap();
            assert_eq!(clean, ident);
        }
    }

    #[test]
    fn evaluation_does_not_touch_parameters() {
        let env = Env::from_kind(EnvKind::Cartpole);
        let policy = Policy::categorical_mlp(4, &[8], 2, &mut seeded(2));
        let before = policy.param_hash();
        evaluate_return(&env, &policy, None, 3, 0, ActionMode::Greedy).unwrap();
        assert_eq!(policy.param_hash(), before);
    }

    #[test]
    fn zero_episodes_rejected() {
        let env = Env::from_kind(EnvKind::Cartpole);
        let policy = Policy::categorical_mlp(4, &[8], 2, &mut seeded(2));
        assert!(evaluate_return(&env, &policy, None, 0, 0, ActionMode::Greedy).is_err());
    }
}
