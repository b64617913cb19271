//! Exact quantities and a REINFORCE learner for the one-step MDP.

use super::policy::{ActionDist, ActionMode, Policy};
use super::ppo::TrainStats;
use super::TrainConfig;
use crate::envs::{Action, Env, OneStepMdp};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Action probabilities of `policy` at one-hot observation `o` in `mode`.
pub(crate) fn action_probs(policy: &Policy, o: usize, mode: ActionMode) -> Vec<f64> {
    let obs = OneStepMdp::one_hot(o);
    let ActionDist::Categorical(p) = policy.dist(&obs) else {
        unreachable!("one-step policies are categorical")
    };
    match mode {
        ActionMode::Stochastic => p,
        ActionMode::Greedy => {
            let mut g = vec![0.0; p.len()];
            g[super::argmax(&p)] = 1.0;
            g
        }
    }
}

/// Expected victim return, by enumeration. `attack[s][o]` is the
/// probability of showing observation `o` in true state `s`; `None` means
/// no attack.
pub fn one_step_expected_return(
    mdp: &OneStepMdp,
    policy: &Policy,
    mode: ActionMode,
    attack: Option<&[Vec<f64>]>,
) -> Result<f64> {
    if !policy.is_discrete() || policy.obs_dim() != OneStepMdp::N_STATES {
        return Err(Error::Unsupported("one-step return needs a two-state categorical policy".into()));
    }
    let n = OneStepMdp::N_STATES;
    let pi: Vec<Vec<f64>> = (0..n).map(|o| action_probs(policy, o, mode)).collect();
    let mut total = 0.0;
    for s in 0..n {
        for o in 0..n {
            let nu = match attack {
                Some(table) => table[s][o],
                None => f64::from(u8::from(s == o)),
            };
            if nu == 0.0 {
                continue;
            }
            for (a, pa) in pi[o].iter().enumerate() {
                total += mdp.probs[s] * nu * pa * mdp.reward(s, a);
            }
        }
    }
    Ok(total)
}

/// Gradient of the unattacked expected return w.r.t. the logits of a
/// tabular softmax policy (row-major, like the policy's parameters).
pub fn one_step_return_gradient(mdp: &OneStepMdp, policy: &Policy) -> Result<Vec<f64>> {
    let Policy::TabularSoftmax { n_actions, .. } = policy else {
        return Err(Error::Unsupported("analytic gradient needs a tabular policy".into()));
    };
    let mut grad = vec![0.0; policy.num_params()];
    for o in 0..OneStepMdp::N_STATES {
        let p = action_probs(policy, o, ActionMode::Stochastic);
        let mean: f64 = p.iter().enumerate().map(|(a, pa)| pa * mdp.reward(o, a)).sum();
        for k in 0..*n_actions {
            grad[o * n_actions + k] = mdp.probs[o] * p[k] * (mdp.reward(o, k) - mean);
        }
    }
    Ok(grad)
}

/// REINFORCE with a per-state running-mean baseline. Each of the
/// `total_steps` iterations is one single-step episode.
pub fn train_reinforce_tabular(env: &Env, config: &TrainConfig, rng: &mut Rng) -> Result<(Policy, TrainStats)> {
    let Env::OneStep(mdp) = env else {
        return Err(Error::Unsupported("tabular REINFORCE runs on the one-step MDP only".into()));
    };
    if config.total_steps == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("step count and learning rate must be positive".into()));
    }
    let n = OneStepMdp::N_STATES;
    let mut policy = Policy::tabular_uniform(n, OneStepMdp::N_ACTIONS);
    let mut baseline = vec![0.0; n];
    let mut visits = vec![0usize; n];
    let mut stats = TrainStats::default();
    let mut grad = vec![0.0; policy.num_params()];
    for _ in 0..config.total_steps {
        let state = env.reset(rng);
        let s = OneStepMdp::index_of(&state)?;
        let action = policy.act(&state, ActionMode::Stochastic, rng);
        let Action::Discrete(a) = action else { unreachable!() };
        let r = mdp.reward(s, a);
        visits[s] += 1;
        let advantage = r - baseline[s];
        baseline[s] += (r - baseline[s]) / visits[s] as f64;

        grad.iter_mut().for_each(|g| *g = 0.0);
        policy.accumulate_grad(&state, &action, advantage, config.entropy_coef, &mut grad)?;
        let mut params = policy.params();
        for (p, g) in params.iter_mut().zip(&grad) {
            *p += config.learning_rate * g;
        }
        policy.set_params(&params);
        stats.episode_returns.push(r);
        stats.env_steps += 1;
        stats.updates += 1;
    }
    Ok((policy, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use crate::rng::seeded;

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mdp = OneStepMdp::default();
        let mut policy = Policy::tabular_uniform(2, 2);
        policy.set_params(&[0.3, -0.2, -0.5, 0.8]);
        let grad = one_step_return_gradient(&mdp, &policy).unwrap();
        let base = policy.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let mut plus = policy.clone();
            plus.set_params(&p);
            p[i] -= 2.0 * h;
            let mut minus = policy.clone();
            minus.set_params(&p);
            let f = |pol: &Policy| one_step_expected_return(&mdp, pol, ActionMode::Stochastic, None).unwrap();
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-3 * fd.abs().max(1e-6), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn reinforce_learns_the_diagonal() {
        let env = Env::from_kind(EnvKind::OneStep);
        let config = TrainConfig::victim_default(EnvKind::OneStep);
        let (policy, _) = train_reinforce_tabular(&env, &config, &mut seeded(0)).unwrap();
        let Env::OneStep(mdp) = &env else { unreachable!() };
        let greedy = one_step_expected_return(mdp, &policy, ActionMode::Greedy, None).unwrap();
        assert!((greedy - 1.0).abs() < 1e-12);
        let stochastic = one_step_expected_return(mdp, &policy, ActionMode::Stochastic, None).unwrap();
        assert!(stochastic > 0.99, "{stochastic}");
    }
}
