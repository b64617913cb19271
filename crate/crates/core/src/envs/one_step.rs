use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvKind, EnvSpec, EnvState, InitialDist, Step};
use crate::error::{Error, Result};

/// Two initial states with probabilities 1/3 and 2/3, two actions, episode
/// ends after one step.
///
/// Rewards are pinned by three constraints: the optimal unattacked victim
/// earns 1, the state-swap attack drives it to 0 and the perfect illusory
/// scheme (always fool in state 0, fool half the time in state 1) leaves
/// 1/6. With zero off-diagonal payoffs this gives r(0,0)=2, r(1,1)=1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepMdp {
    pub probs: [f64; 2],
    /// `payoff[s][a]`
    pub payoff: [[f64; 2]; 2],
}

impl Default for OneStepMdp {
    fn default() -> Self {
        Self {
            probs: [1.0 / 3.0, 2.0 / 3.0],
            payoff: [[2.0, 0.0], [0.0, 0.5]],
        }
    }
}

impl OneStepMdp {
    pub const N_STATES: usize = 2;
    pub const N_ACTIONS: usize = 2;

    pub fn initial(&self) -> InitialDist {
        InitialDist::Categorical { probs: self.probs.to_vec() }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: EnvKind::OneStep,
            state_dim: 2,
            action_space: ActionSpace::Discrete { n: 2 },
            horizon: 1,
            gamma: 0.99,
            symmetry_point: vec![0.5, 0.5],
            initial: self.initial(),
            obs_scale: vec![1.0, 1.0],
        }
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.payoff[state][action]
    }

    pub fn one_hot(index: usize) -> EnvState {
        let mut v = vec![0.0; Self::N_STATES];
        v[index] = 1.0;
        EnvState(v)
    }

    /// Index of a one-hot (or near one-hot) state vector.
    pub fn index_of(state: &[f64]) -> Result<usize> {
        if state.len() != Self::N_STATES {
            return Err(Error::InvalidState(format!("one-step state must have 2 entries, got {}", state.len())));
        }
        Ok(if state[1] > state[0] { 1 } else { 0 })
    }

    pub(super) fn step(&self, state: &EnvState, action: &Action) -> Result<Step> {
        self.spec().action_space.validate(action)?;
        let s = Self::index_of(state)?;
        let Action::Discrete(a) = action else { unreachable!("validated") };
        Ok(Step {
            state: state.clone(),
            reward: self.reward(s, *a),
            done: true,
        })
    }
}
