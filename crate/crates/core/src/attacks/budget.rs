use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step L2 radius on normalised observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttackBudget(f64);

/// Slack allowed when checking logged observations against the budget.
pub const BUDGET_TOL: f64 = 1e-6;

impl AttackBudget {
    pub fn new(radius: f64) -> Result<Self> {
        if radius.is_finite() && radius >= 0.0 {
            Ok(Self(radius))
        } else {
            Err(Error::Config(format!("attack budget must be finite and non-negative, got {radius}")))
        }
    }

    pub fn radius(self) -> f64 {
        self.0
    }

    /// Shrinks `delta` onto the ball of this radius.
    pub fn project(self, delta: &mut [f64]) {
        let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm > self.0 {
            let scale = if norm > 0.0 { self.0 / norm } else { 0.0 };
            delta.iter_mut().for_each(|d| *d *= scale);
        }
    }

    pub fn contains(self, delta: &[f64]) -> bool {
        delta.iter().map(|d| d * d).sum::<f64>().sqrt() <= self.0 + BUDGET_TOL
    }
}

/// Scales `delta` so its norm is at most one.
pub fn clip_unit_ball(delta: &mut [f64]) {
    let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm > 1.0 {
        delta.iter_mut().for_each(|d| *d /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_the_ball() {
        let b = AttackBudget::new(0.2).unwrap();
        let mut d = vec![3.0, 4.0];
        b.project(&mut d);
        assert!((d[0] - 0.12).abs() < 1e-15 && (d[1] - 0.16).abs() < 1e-15);
        let mut inside = vec![0.1, 0.0];
        b.project(&mut inside);
        assert_eq!(inside, vec![0.1, 0.0]);
        assert!(AttackBudget::new(-1.0).is_err());
    }

    #[test]
    fn zero_budget_collapses() {
        let b = AttackBudget::new(0.0).unwrap();
        let mut d = vec![1.0, -2.0];
        b.project(&mut d);
        assert_eq!(d, vec![0.0, 0.0]);
    }
}
