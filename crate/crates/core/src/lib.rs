//! Laboratory for observation-space adversarial attacks on sequential
//! decision-makers.
//!
//! The crate covers the whole loop: environments with explicit access to
//! their transition sampler, victim policies and their training, the attack
//! families (minimum-norm perturbation, budgeted learned adversary, perfect
//! illusory chain and the KL-constrained ε-illusory dual-ascent trainer),
//! KL estimators, hypothesis tests and a CUSUM-based dynamics-model detector,
//! plus the experiment harness that ties them together.
//!
//! All KL values are in nats.

pub mod agents;
pub mod attacks;
pub mod detectors;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
