//! Likelihood-ratio tests over categorical measurement distributions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

fn llr(p1: &[f64], p2: &[f64], q: usize) -> Option<f64> {
    let (a, b) = (p1[q], p2[q]);
    if a == 0.0 && b == 0.0 {
        None
    } else {
        Some(a.ln() - b.ln())
    }
}

/// Neyman-Pearson rule: `H0` iff `log(P₁(q)/P₂(q)) ≥ T`. A measurement with
/// zero density under both hypotheses is assigned to `H0` with a warning.
pub fn llr_decide(p1: &[f64], p2: &[f64], q: usize, threshold: f64) -> Hypothesis {
    match llr(p1, p2, q) {
        Some(l) if l >= threshold => Hypothesis::H0,
        Some(_) => Hypothesis::H1,
        None => {
            log::warn!("measurement {q} has zero density under both hypotheses; deciding H0");
            Hypothesis::H0
        }
    }
}

/// Stopping boundaries on the accumulated `log(P₁/P₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldBounds {
    pub lower: f64,
    pub upper: f64,
}

impl WaldBounds {
    /// Wald's boundaries for type-I error `alpha` (rejecting a true `H0`)
    /// and type-II error `beta` (accepting a false `H0`):
    /// upper `ln((1−α)/β)`, lower `ln(α/(1−β))`.
    pub fn from_error_rates(alpha: f64, beta: f64) -> Self {
        Self {
            lower: (alpha / (1.0 - beta)).ln(),
            upper: ((1.0 - alpha) / beta).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WaldDecision {
    Decided(Hypothesis),
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldOutcome {
    pub decision: WaldDecision,
    /// Number of measurements consumed.
    pub steps: usize,
    pub llr_sum: f64,
}

/// Sequential probability ratio test: accumulate the log-likelihood ratio
/// and stop at the first boundary crossing. A stream that ends before
/// either boundary is reached is `Undecided`.
pub fn wald_sequential<I>(p1: &[f64], p2: &[f64], stream: I, bounds: WaldBounds) -> WaldOutcome
where
    I: IntoIterator<Item = usize>,
{
    let mut sum = 0.0;
    let mut steps = 0;
    for q in stream {
        steps += 1;
        sum += llr(p1, p2, q).unwrap_or(0.0);
        if sum >= bounds.upper {
            return WaldOutcome {
                decision: WaldDecision::Decided(Hypothesis::H0),
                steps,
                llr_sum: sum,
            };
        }
        if sum <= bounds.lower {
            return WaldOutcome {
                decision: WaldDecision::Decided(Hypothesis::H1),
                steps,
                llr_sum: sum,
            };
        }
    }
    WaldOutcome {
        decision: WaldDecision::Undecided,
        steps,
        llr_sum: sum,
    }
}

fn xlogy_ratio(x: f64, num: f64, den: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        x * (num.ln() - den.ln())
    }
}

/// `d(α, β) = α·ln(α/(1−β)) + (1−α)·ln((1−α)/β)` in nats, with
/// `0·ln 0 = 0` and `+∞` when a non-vanishing term divides by zero.
pub fn binary_relative_entropy(alpha: f64, beta: f64) -> f64 {
    xlogy_ratio(alpha, alpha, 1.0 - beta) + xlogy_ratio(1.0 - alpha, 1.0 - alpha, beta)
}
