use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvKind, EnvSpec, EnvState, InitialDist, Step};
use crate::error::Result;

/// Torque-limited inverted pendulum, state `(cos θ, sin θ, θ̇)` with θ = 0
/// upright. Semi-implicit Euler: θ̇ is updated first, then θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub horizon: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            horizon: 200,
        }
    }
}

/// Wraps an angle to `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub const OBS_SCALE: [f64; 3] = [1.0, 1.0, 8.0];

    pub fn initial(&self) -> InitialDist {
        InitialDist::UniformAngle {
            theta: [-PI, PI],
            theta_dot: [-1.0, 1.0],
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: EnvKind::Pendulum,
            state_dim: 3,
            action_space: ActionSpace::Box {
                low: vec![-self.max_torque],
                high: vec![self.max_torque],
            },
            horizon: self.horizon,
            gamma: 0.99,
            symmetry_point: vec![0.0; 3],
            initial: self.initial(),
            obs_scale: Self::OBS_SCALE.to_vec(),
        }
    }

    pub fn angle(state: &[f64]) -> f64 {
        state[1].atan2(state[0])
    }

    /// Mechanical energy with the upright position as the potential maximum.
    pub fn energy(&self, state: &[f64]) -> f64 {
        let inertia = self.mass * self.length * self.length / 3.0;
        0.5 * inertia * state[2] * state[2]
            + self.mass * self.gravity * 0.5 * self.length * Self::angle(state).cos()
    }

    /// Next state and the cost incurred at `state` under `action`.
    pub(super) fn dynamics(&self, state: &[f64], action: &Action) -> Result<(EnvState, f64)> {
        self.spec().action_space.validate(action)?;
        let Action::Continuous(u) = action else { unreachable!("validated") };
        let u = u[0].clamp(-self.max_torque, self.max_torque);
        let theta = Self::angle(state);
        let theta_dot = state[2];
        let cost = wrap_angle(theta).powi(2) + 0.1 * theta_dot * theta_dot + 0.001 * u * u;
        let acc = 3.0 * self.gravity / (2.0 * self.length) * theta.sin()
            + 3.0 / (self.mass * self.length * self.length) * u;
        let new_theta_dot = (theta_dot + acc * self.dt).clamp(-self.max_speed, self.max_speed);
        let new_theta = theta + new_theta_dot * self.dt;
        Ok((EnvState(vec![new_theta.cos(), new_theta.sin(), new_theta_dot]), cost))
    }

    pub(super) fn step(&self, state: &EnvState, t: usize, action: &Action) -> Result<Step> {
        let (next, cost) = self.dynamics(state, action)?;
        Ok(Step {
            state: next,
            reward: -cost,
            done: t + 1 >= self.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - (-PI)).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }
}
