use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvKind, EnvSpec, EnvState, InitialDist, Step};
use crate::error::Result;

/// Classic cart-pole with Euler integration. State `(x, ẋ, θ, θ̇)`,
/// actions push left (0) or right (1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartPole {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
    pub horizon: usize,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            x_threshold: 2.4,
            horizon: 500,
        }
    }
}

impl CartPole {
    /// Normalisation maxima for `(x, ẋ, θ, θ̇)`: the termination bounds for
    /// positions, observed velocity ranges for the rates.
    pub const OBS_SCALE: [f64; 4] = [2.4, 3.0, 0.2095, 3.5];

    pub fn initial(&self) -> InitialDist {
        InitialDist::UniformBox {
            low: vec![-0.05; 4],
            high: vec![0.05; 4],
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: EnvKind::Cartpole,
            state_dim: 4,
            action_space: ActionSpace::Discrete { n: 2 },
            horizon: self.horizon,
            gamma: 0.99,
            symmetry_point: vec![0.0; 4],
            initial: self.initial(),
            obs_scale: Self::OBS_SCALE.to_vec(),
        }
    }

    pub(super) fn dynamics(&self, state: &[f64], action: &Action) -> Result<EnvState> {
        self.spec().action_space.validate(action)?;
        let Action::Discrete(a) = action else { unreachable!("validated") };
        let force = if *a == 1 { self.force_mag } else { -self.force_mag };
        let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
        let total_mass = self.mass_cart + self.mass_pole;
        let pole_mass_length = self.mass_pole * self.length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.length * (4.0 / 3.0 - self.mass_pole * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
        Ok(EnvState(vec![
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * theta_acc,
        ]))
    }

    pub fn is_failed(&self, state: &[f64]) -> bool {
        state[0].abs() > self.x_threshold || state[2].abs() > self.theta_threshold
    }

    pub(super) fn step(&self, state: &EnvState, t: usize, action: &Action) -> Result<Step> {
        let next = self.dynamics(state, action)?;
        let done = self.is_failed(&next) || t + 1 >= self.horizon;
        Ok(Step {
            state: next,
            reward: 1.0,
            done,
        })
    }
}
