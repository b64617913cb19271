use super::kl_categorical;
use crate::agents::{ActionDist, Policy};
use crate::attacks::AttackPolicy;
use crate::envs::{Env, OneStepMdp};
use crate::error::{Error, Result};

/// `ν(o|s)` as a table, for attacks on the one-step MDP that have one.
pub fn observation_kernel(attack: &AttackPolicy) -> Result<Vec<Vec<f64>>> {
    match attack {
        AttackPolicy::Identity => Ok(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        AttackPolicy::Tabular(t) => Ok(t.probs.clone()),
        other => Err(Error::Unsupported(format!(
            "{} attack has no enumerable observation kernel",
            other.kind()
        ))),
    }
}

/// Observation marginal `Q(o) = Σ_s p(s) ν(o|s)`.
pub fn observed_distribution(mdp: &OneStepMdp, kernel: &[Vec<f64>]) -> Vec<f64> {
    (0..OneStepMdp::N_STATES)
        .map(|o| (0..OneStepMdp::N_STATES).map(|s| mdp.probs[s] * kernel[s][o]).sum())
        .collect()
}

/// Entropy of the unattacked observation process (victim factor omitted).
pub fn exact_entropy(mdp: &OneStepMdp) -> f64 {
    -mdp.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `−Σ_o P(o) ln Q(o)` between the unattacked and attacked observation
/// processes (victim factor omitted).
pub fn exact_cross_entropy(mdp: &OneStepMdp, kernel: &[Vec<f64>]) -> f64 {
    let q = observed_distribution(mdp, kernel);
    let mut h = 0.0;
    for (p, q) in mdp.probs.iter().zip(&q) {
        if *p == 0.0 {
            continue;
        }
        if *q == 0.0 {
            return f64::INFINITY;
        }
        h -= p * q.ln();
    }
    h
}

/// KL between the victim-observed trajectory densities without and with
/// the attack, by enumerating every `(s, o, a)` triple. States are
/// marginalised out; the victim's action factor is kept in both densities
/// and cancels.
pub fn exact_trajectory_kl(env: &Env, victim: &Policy, attack: &AttackPolicy) -> Result<f64> {
    let Env::OneStep(mdp) = env else {
        return Err(Error::Unsupported(format!("{} cannot be enumerated", env.kind())));
    };
    let kernel = observation_kernel(attack)?;
    let n = OneStepMdp::N_STATES;
    let mut clean = Vec::new();
    let mut attacked = Vec::new();
    for o in 0..n {
        let ActionDist::Categorical(pi) = victim.dist(&OneStepMdp::one_hot(o)) else {
            return Err(Error::Unsupported("one-step victims are categorical".into()));
        };
        for pa in pi {
            let mut rho = 0.0;
            let mut rho_nu = 0.0;
            for s in 0..n {
                rho += mdp.probs[s] * f64::from(u8::from(s == o)) * pa;
                rho_nu += mdp.probs[s] * kernel[s][o] * pa;
            }
            clean.push(rho);
            attacked.push(rho_nu);
        }
    }
    Ok(kl_categorical(&clean, &attacked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{fig1_scheme, state_swap};
    use crate::envs::EnvKind;

    #[test]
    fn enumeration_values() {
        let env = Env::from_kind(EnvKind::OneStep);
        let victim = Policy::tabular_from_probs(&[vec![0.7, 0.3], vec![0.4, 0.6]]);
        assert_eq!(exact_trajectory_kl(&env, &victim, &AttackPolicy::Identity).unwrap(), 0.0);
        let swap = exact_trajectory_kl(&env, &victim, &AttackPolicy::Tabular(state_swap())).unwrap();
        assert!((swap - 2f64.ln() / 3.0).abs() < 1e-12);
        let fig1 = exact_trajectory_kl(&env, &victim, &AttackPolicy::Tabular(fig1_scheme())).unwrap();
        assert!(fig1.abs() < 1e-12);
    }

    #[test]
    fn decomposition_holds() {
        let mdp = OneStepMdp::default();
        let k = vec![vec![0.8, 0.2], vec![0.35, 0.65]];
        let kl = kl_categorical(&mdp.probs, &observed_distribution(&mdp, &k));
        assert!((exact_cross_entropy(&mdp, &k) - exact_entropy(&mdp) - kl).abs() < 1e-12);
    }

    #[test]
    fn continuous_envs_are_refused() {
        let env = Env::from_kind(EnvKind::Cartpole);
        let victim = Policy::tabular_uniform(2, 2);
        assert!(exact_trajectory_kl(&env, &victim, &AttackPolicy::Identity).is_err());
    }
}
