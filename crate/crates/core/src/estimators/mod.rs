//! KL-divergence machinery: the categorical divergence, the exact
//! trajectory-density oracle for the one-step MDP, the Monte-Carlo
//! cross-entropy upper bound and the sliding-window consistency surrogate.
//!
//! Every value is in nats.

mod consistency;
mod exact;
mod mc;
mod window;

pub use consistency::{episode_inconsistency, mean_inconsistency};
pub use exact::{exact_cross_entropy, exact_entropy, exact_trajectory_kl, observation_kernel, observed_distribution};
pub use mc::{mc_cross_entropy_upper, EmissionDensity};
pub use window::{sliding_kl_surrogate, SlidingWindow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMethod {
    ExactEnumeration,
    McUpperBound,
    SlidingWindowSurrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub method: KlMethod,
}

/// Validated probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CategoricalDist(Vec<f64>);

impl CategoricalDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("{probs:?} is not a probability vector")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for CategoricalDist {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CategoricalDist> for Vec<f64> {
    fn from(d: CategoricalDist) -> Self {
        d.0
    }
}

/// `Σ p_i ln(p_i / q_i)` with `0·ln(0/·) = 0`; `+∞` when some `p_i > 0`
/// meets `q_i = 0`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    let mut total = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_hand_values() {
        let p = [1.0 / 3.0, 2.0 / 3.0];
        assert_eq!(kl_categorical(&p, &p), 0.0);
        let q = [2.0 / 3.0, 1.0 / 3.0];
        assert!((kl_categorical(&p, &q) - 2f64.ln() / 3.0).abs() < 1e-12);
        assert_eq!(kl_categorical(&[1.0, 0.0], &[0.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn categorical_validation() {
        assert!(CategoricalDist::new(vec![0.2, 0.8]).is_ok());
        assert!(CategoricalDist::new(vec![0.2, 0.7]).is_err());
        assert!(serde_json::from_str::<CategoricalDist>("[0.5, 0.6]").is_err());
    }
}
