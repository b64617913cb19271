//! Tabular attacks on the one-step MDP and the exact dual-ascent trainer.

use serde::{Deserialize, Serialize};

use super::dual::DualConfig;
use crate::agents::{action_probs, one_step_expected_return, sample_categorical, ActionMode, Policy};
use crate::envs::{EnvState, OneStepMdp};
use crate::error::{Error, Result};
use crate::estimators::{kl_categorical, observed_distribution};
use crate::nn::{softmax, Adam};
use crate::rng::Rng;

/// `probs[s][o]`: probability of showing observation `o` in state `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularAttack {
    pub probs: Vec<Vec<f64>>,
}

impl TabularAttack {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for row in &probs {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("attack row {row:?} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    pub fn identity() -> Self {
        Self {
            probs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }

    pub(super) fn emit(&self, state: &EnvState, rng: &mut Rng) -> Result<EnvState> {
        let s = OneStepMdp::index_of(state)?;
        Ok(OneStepMdp::one_hot(sample_categorical(&self.probs[s], rng)))
    }

    pub fn log_density(&self, state: &[f64], observation: &[f64]) -> Result<f64> {
        let s = OneStepMdp::index_of(state)?;
        let o = OneStepMdp::index_of(observation)?;
        Ok(self.probs[s][o].ln())
    }
}

/// Always show the other state.
pub fn state_swap() -> TabularAttack {
    TabularAttack {
        probs: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    }
}

/// Always fool in state 0, fool half the time in state 1: the observed
/// marginal equals the true initial distribution.
pub fn fig1_scheme() -> TabularAttack {
    TabularAttack {
        probs: vec![vec![0.0, 1.0], vec![0.5, 0.5]],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExactDualConfig {
    pub dual: DualConfig,
    pub outer_iterations: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    /// Victim action selection used for the return.
    pub victim_mode: ActionMode,
    /// Slack on `KL ≤ ε` when picking among hyperparameter settings.
    pub feasibility_tol: f64,
}

impl Default for ExactDualConfig {
    fn default() -> Self {
        Self {
            dual: DualConfig::default(),
            outer_iterations: 3000,
            inner_steps: 20,
            inner_lr: 0.05,
            victim_mode: ActionMode::Greedy,
            feasibility_tol: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualAscentOutcome {
    pub epsilon: f64,
    pub attack: TabularAttack,
    pub lambda: f64,
    /// Exact KL of the final attack, nats.
    pub kl: f64,
    pub victim_return: f64,
    pub dual: DualConfig,
    pub feasible: bool,
}

fn attack_from_logits(logits: &[f64]) -> Vec<Vec<f64>> {
    logits.chunks(OneStepMdp::N_STATES).map(softmax).collect()
}

/// Dual ascent with the exact return and exact KL: Adam steps on the attack
/// logits minimise `R + λ(KL − ε)`, then λ takes a projected step.
pub fn exact_dual_ascent(
    mdp: &OneStepMdp,
    victim: &Policy,
    epsilon: f64,
    config: &ExactDualConfig,
) -> Result<DualAscentOutcome> {
    let n = OneStepMdp::N_STATES;
    if !(epsilon >= 0.0) {
        return Err(Error::Config("ε must be non-negative".into()));
    }
    if !victim.is_discrete() || victim.obs_dim() != n {
        return Err(Error::Unsupported("exact dual ascent needs a two-state categorical victim".into()));
    }
    // m[s][o]: expected reward in state s when the victim sees o.
    let m: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..n)
                .map(|o| {
                    let pi = action_probs(victim, o, config.victim_mode);
                    pi.iter().enumerate().map(|(a, pa)| pa * mdp.reward(s, a)).sum()
                })
                .collect()
        })
        .collect();
    let p = mdp.probs;
    let mut lambda = config.dual.lambda0;
    let mut logits = vec![0.0; n * n];
    let mut adam = Adam::new(logits.len(), config.inner_lr);
    let mut grad = vec![0.0; logits.len()];
    for _ in 0..config.outer_iterations {
        for _ in 0..config.inner_steps {
            let nu = attack_from_logits(&logits);
            let q = observed_distribution(mdp, &nu);
            for s in 0..n {
                let g: Vec<f64> = (0..n).map(|o| p[s] * (m[s][o] - lambda * p[o] / q[o])).collect();
                let mean: f64 = (0..n).map(|o| nu[s][o] * g[o]).sum();
                for k in 0..n {
                    grad[s * n + k] = nu[s][k] * (g[k] - mean);
                }
            }
            adam.step(&mut logits, &grad);
        }
        let q = observed_distribution(mdp, &attack_from_logits(&logits));
        let kl = kl_categorical(&p, &q);
        let violation = kl - epsilon;
        if violation != 0.0 {
            lambda = (lambda + config.dual.step_size * violation).max(0.0);
        }
        if !lambda.is_finite() || lambda > config.dual.lambda_cap {
            return Err(Error::TrainingFailure(format!("λ diverged to {lambda}")));
        }
    }
    let attack = TabularAttack {
        probs: attack_from_logits(&logits),
    };
    let kl = kl_categorical(&p, &observed_distribution(mdp, &attack.probs));
    let victim_return = one_step_expected_return(mdp, victim, config.victim_mode, Some(&attack.probs))?;
    Ok(DualAscentOutcome {
        epsilon,
        attack,
        lambda,
        kl,
        victim_return,
        dual: config.dual.clone(),
        feasible: kl <= epsilon + config.feasibility_tol,
    })
}

/// Runs the dual-ascent hyperparameter grid and keeps the lowest-return
/// feasible result (or the least-violating one when none is feasible).
pub fn tune_dual_ascent(
    mdp: &OneStepMdp,
    victim: &Policy,
    epsilon: f64,
    config: &ExactDualConfig,
) -> Result<DualAscentOutcome> {
    let mut best: Option<DualAscentOutcome> = None;
    for dual in DualConfig::sweep_grid() {
        let cfg = ExactDualConfig {
            dual: DualConfig {
                lambda_cap: config.dual.lambda_cap,
                window: config.dual.window,
                ..dual
            },
            ..config.clone()
        };
        let outcome = match exact_dual_ascent(mdp, victim, epsilon, &cfg) {
            Ok(o) => o,
            Err(Error::TrainingFailure(_)) => continue,
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some(b) => match (outcome.feasible, b.feasible) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => outcome.victim_return < b.victim_return,
                (false, false) => outcome.kl < b.kl,
            },
        };
        if better {
            best = Some(outcome);
        }
    }
    best.ok_or_else(|| Error::TrainingFailure("every dual-ascent setting diverged".into()))
}

/// One tuned run per ε.
pub fn sweep_epsilon(
    mdp: &OneStepMdp,
    victim: &Policy,
    epsilons: &[f64],
    config: &ExactDualConfig,
) -> Result<Vec<DualAscentOutcome>> {
    epsilons.iter().map(|&e| tune_dual_ascent(mdp, victim, e, config)).collect()
}
