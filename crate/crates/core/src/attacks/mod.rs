//! Observation-space attacks.
//!
//! An attack sees the true state and rewrites what the victim observes. The
//! families are the identity map, the minimum-norm perturbation (MNP), a
//! budgeted learned adversary without detectability term (SA-MDP style), the
//! perfect illusory chain, tabular attacks on the one-step MDP and the
//! KL-constrained ε-illusory adversary.
//!
//! Budgets are L2 radii on normalised observations; logged observations are
//! in raw units.

mod budget;
mod checkpoint;
mod dual;
mod learned;
mod mnp;
mod one_step;

pub use budget::{clip_unit_ball, AttackBudget, BUDGET_TOL};
pub use checkpoint::AttackCheckpoint;
pub use dual::{adversary_reward, dual_update, DualConfig, DualState, WINDOW};
pub use learned::{
    train_epsilon_illusory, train_samdp_adversary, AdversaryConfig, AttackTask, BudgetAnchor, FeatureSet,
    LearnedAttack, TrainedAttack,
};
pub use mnp::MnpAttack;
pub use one_step::{
    exact_dual_ascent, fig1_scheme, state_swap, sweep_epsilon, tune_dual_ascent, DualAscentOutcome, ExactDualConfig,
    TabularAttack,
};

use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::envs::{Action, Env, EnvState, OneStepMdp, Transition};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Identity,
    Mnp,
    Samdp,
    PerfectIllusory,
    EpsilonIllusory,
    Tabular,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Identity => "identity",
            AttackKind::Mnp => "mnp",
            AttackKind::Samdp => "samdp",
            AttackKind::PerfectIllusory => "perfect-illusory",
            AttackKind::EpsilonIllusory => "epsilon-illusory",
            AttackKind::Tabular => "tabular",
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(AttackKind::Identity),
            "mnp" => Ok(AttackKind::Mnp),
            "samdp" | "sa-mdp" => Ok(AttackKind::Samdp),
            "perfect-illusory" | "perfect_illusory" => Ok(AttackKind::PerfectIllusory),
            "epsilon-illusory" | "epsilon_illusory" => Ok(AttackKind::EpsilonIllusory),
            "tabular" => Ok(AttackKind::Tabular),
            other => Err(Error::Config(format!("unknown attack '{other}'"))),
        }
    }
}

/// Stochastic map from the true state and the victim's observation-action
/// history to an observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackPolicy {
    Identity,
    Mnp(MnpAttack),
    /// Learned budgeted adversary (SA-MDP style or ε-illusory).
    Learned(LearnedAttack),
    /// Observation chain seeded by negating the initial state about the
    /// symmetry point and advanced with the true transition function.
    PerfectIllusory,
    Tabular(TabularAttack),
}

/// Per-episode attack state: the last emitted observation and the victim's
/// last action.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackSession {
    pub t: usize,
    pub prev_obs: Option<EnvState>,
    pub prev_action: Option<Action>,
}

impl AttackSession {
    /// The unattacked transition applied to the previous emitted observation
    /// and action, or the initial-distribution mean at `t = 0`. Raw units.
    pub fn prediction(&self, env: &Env, rng: &mut Rng) -> Result<Vec<f64>> {
        match (&self.prev_obs, &self.prev_action) {
            (Some(o), Some(a)) => match env.transition_sample(o, a, rng)? {
                Transition::Next(s) => Ok(s.0),
                Transition::Terminal => Ok(env.initial_mean()),
            },
            _ => Ok(env.initial_mean()),
        }
    }

    /// Records the victim's response to the last emitted observation.
    pub fn record_action(&mut self, action: &Action) {
        self.prev_action = Some(action.clone());
        self.t += 1;
    }
}

/// Squared normalised distance between an emitted observation and what the
/// unattacked dynamics allow: the prediction from the previous emitted
/// observation and action, or, on the first step, the nearest point of the
/// initial-state support.
pub fn step_inconsistency(env: &Env, first_step: bool, emitted: &[f64], prediction: &[f64]) -> f64 {
    let reference = if first_step { env.initial().project(emitted) } else { prediction.to_vec() };
    let o = env.normalize(emitted);
    let r = env.normalize(&reference);
    o.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum()
}

impl AttackPolicy {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackPolicy::Identity => AttackKind::Identity,
            AttackPolicy::Mnp(_) => AttackKind::Mnp,
            AttackPolicy::Learned(l) => match l.features {
                FeatureSet::State => AttackKind::Samdp,
                FeatureSet::Consistency => AttackKind::EpsilonIllusory,
            },
            AttackPolicy::PerfectIllusory => AttackKind::PerfectIllusory,
            AttackPolicy::Tabular(_) => AttackKind::Tabular,
        }
    }

    pub fn budget(&self) -> Option<AttackBudget> {
        match self {
            AttackPolicy::Mnp(m) => Some(m.budget),
            AttackPolicy::Learned(l) => Some(l.budget),
            _ => None,
        }
    }

    /// Starts an episode. Refuses constructions whose preconditions the
    /// environment violates.
    pub fn session(&self, env: &Env) -> Result<AttackSession> {
        match self {
            AttackPolicy::PerfectIllusory => {
                let spec = env.spec();
                if !spec.initial.is_symmetric_about(&spec.symmetry_point) {
                    return Err(Error::Unsupported(format!(
                        "{} initial distribution is not symmetric about its symmetry point",
                        env.kind()
                    )));
                }
            }
            AttackPolicy::Mnp(_) if !env.spec().action_space.is_discrete() => {
                return Err(Error::Unsupported("MNP needs a discrete-action victim".into()));
            }
            AttackPolicy::Tabular(t) if !matches!(env, Env::OneStep(_)) || t.probs.len() != OneStepMdp::N_STATES => {
                return Err(Error::Unsupported("tabular attacks run on the one-step MDP only".into()));
            }
            AttackPolicy::Learned(l) if l.policy.obs_dim() != l.features.dim(env) => {
                return Err(Error::Config("learned attack was trained for a different environment".into()));
            }
            _ => {}
        }
        Ok(AttackSession::default())
    }

    /// Produces the observation shown at the current step and stores it in
    /// the session.
    pub fn emit(
        &self,
        env: &Env,
        victim: &Policy,
        session: &mut AttackSession,
        state: &EnvState,
        rng: &mut Rng,
    ) -> Result<EnvState> {
        let obs = match self {
            AttackPolicy::Identity => state.clone(),
            AttackPolicy::Mnp(m) => m.perturb(env, victim, state, rng)?,
            AttackPolicy::Learned(l) => l.emit(env, session, state, rng)?,
            AttackPolicy::PerfectIllusory => match (&session.prev_obs, &session.prev_action) {
                (Some(o), Some(a)) => match env.transition_sample(o, a, rng)? {
                    Transition::Next(next) => next,
                    Transition::Terminal => {
                        return Err(Error::Unsupported("perfect illusory chain needs a successor state".into()))
                    }
                },
                _ => {
                    let p = env.spec().symmetry_point;
                    EnvState(state.iter().zip(&p).map(|(s, p)| 2.0 * p - s).collect())
                }
            },
            AttackPolicy::Tabular(t) => t.emit(state, rng)?,
        };
        session.prev_obs = Some(obs.clone());
        Ok(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use crate::rng::seeded;

    #[test]
    fn perfect_illusory_negates_the_initial_state() {
        let env = Env::from_kind(EnvKind::Cartpole);
        let victim = Policy::categorical_mlp(4, &[4], 2, &mut seeded(0));
        let attack = AttackPolicy::PerfectIllusory;
        let mut session = attack.session(&env).unwrap();
        let s0 = EnvState(vec![0.01, -0.02, 0.03, 0.04]);
        let o0 = attack.emit(&env, &victim, &mut session, &s0, &mut seeded(1)).unwrap();
        assert_eq!(o0.0, vec![-0.01, 0.02, -0.03, -0.04]);

        let mut session = attack.session(&env).unwrap();
        let zero = EnvState(vec![0.0; 4]);
        let o = attack.emit(&env, &victim, &mut session, &zero, &mut seeded(1)).unwrap();
        assert_eq!(o, zero);
    }

    #[test]
    fn perfect_illusory_refuses_asymmetric_start() {
        let env = Env::from_kind(EnvKind::OneStep);
        assert!(matches!(AttackPolicy::PerfectIllusory.session(&env), Err(Error::Unsupported(_))));
    }

    #[test]
    fn chain_follows_the_transition_function() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let victim = Policy::gaussian_mlp(3, &[4], vec![-2.0], vec![2.0], 0.0, &mut seeded(0));
        let attack = AttackPolicy::PerfectIllusory;
        let mut session = attack.session(&env).unwrap();
        let mut rng = seeded(2);
        let s = env.reset(&mut rng);
        let o0 = attack.emit(&env, &victim, &mut session, &s, &mut rng).unwrap();
        let a = Action::Continuous(vec![0.7]);
        session.record_action(&a);
        let o1 = attack.emit(&env, &victim, &mut session, &s, &mut rng).unwrap();
        let Transition::Next(expected) = env.transition_sample(&o0, &a, &mut rng).unwrap() else { panic!() };
        assert_eq!(o1, expected);
    }

    #[test]
    fn kinds_parse() {
        for k in ["identity", "mnp", "samdp", "perfect-illusory", "epsilon-illusory"] {
            assert_eq!(k.parse::<AttackKind>().unwrap().as_str(), k);
        }
    }
}
