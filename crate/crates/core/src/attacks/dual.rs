//! Lagrangian bookkeeping shared by the ε-illusory trainers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SlidingWindow;

/// Window length of the per-step consistency surrogate.
pub const WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub lambda0: f64,
    pub step_size: f64,
    /// λ beyond this is treated as divergence.
    pub lambda_cap: f64,
    pub window: usize,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            lambda0: 10.0,
            step_size: 0.1,
            lambda_cap: 1e6,
            window: WINDOW,
        }
    }
}

impl DualConfig {
    /// The grid searched by the hyperparameter study.
    pub fn sweep_grid() -> Vec<DualConfig> {
        let mut grid = Vec::new();
        for lambda0 in [10.0, 100.0] {
            for step_size in [0.01, 0.1, 1.0] {
                grid.push(DualConfig {
                    lambda0,
                    step_size,
                    ..DualConfig::default()
                });
            }
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: f64,
    pub epsilon: f64,
    pub step_size: f64,
    pub window: SlidingWindow,
}

impl DualState {
    pub fn new(config: &DualConfig, epsilon: f64) -> Result<Self> {
        if !(config.lambda0 >= 0.0) || !(config.step_size > 0.0) || !(epsilon >= 0.0) {
            return Err(Error::Config("need λ₀ ≥ 0, step size > 0 and ε ≥ 0".into()));
        }
        Ok(Self {
            lambda: config.lambda0,
            epsilon,
            step_size: config.step_size,
            window: SlidingWindow::new(config.window),
        })
    }
}

/// Projected dual step: `λ' = max(λ + α·(kl − ε), 0)`. A zero violation
/// leaves λ untouched.
pub fn dual_update(state: &DualState, kl_estimate: f64) -> DualState {
    let violation = kl_estimate - state.epsilon;
    let lambda = if violation == 0.0 {
        state.lambda
    } else {
        (state.lambda + state.step_size * violation).max(0.0)
    };
    DualState {
        lambda,
        ..state.clone()
    }
}

/// `−r − λ·(‖o − prediction‖² − ε)`.
pub fn adversary_reward(r_victim: f64, emitted: &[f64], prediction: &[f64], lambda: f64, epsilon: f64) -> f64 {
    let sq: f64 = emitted.iter().zip(prediction).map(|(o, p)| (o - p).powi(2)).sum();
    penalised_reward(r_victim, sq, lambda, epsilon)
}

pub(crate) fn penalised_reward(r_victim: f64, sq_distance: f64, lambda: f64, epsilon: f64) -> f64 {
    -r_victim - lambda * (sq_distance - epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lambda: f64, step_size: f64, epsilon: f64) -> DualState {
        DualState {
            lambda,
            epsilon,
            step_size,
            window: SlidingWindow::new(WINDOW),
        }
    }

    #[test]
    fn dual_update_cases() {
        assert_eq!(dual_update(&state(1.0, 0.1, 0.3), 0.3).lambda, 1.0);
        assert_eq!(dual_update(&state(0.05, 1.0, 0.2), 0.1).lambda, 0.0);
        assert!((dual_update(&state(2.0, 0.5, 0.1), 0.3).lambda - 2.1).abs() < 1e-12);
    }

    #[test]
    fn adversary_reward_cases() {
        assert_eq!(adversary_reward(1.0, &[0.0], &[0.0], 0.0, 0.0), -1.0);
        let o = [0.3f64.sqrt(), 0.0];
        let r = adversary_reward(0.5, &o, &[0.0, 0.0], 2.0, 0.1);
        assert!((r + 0.9).abs() < 1e-12);
        assert_eq!(adversary_reward(0.7, &[0.2, 0.4], &[0.2, 0.4], 5.0, 0.0), -0.7);
    }

    #[test]
    fn sweep_grid_has_six_points() {
        assert_eq!(DualConfig::sweep_grid().len(), 6);
    }
}
