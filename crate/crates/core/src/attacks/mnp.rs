use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::budget::AttackBudget;
use crate::agents::{argmax, ActionDist, Policy};
use crate::envs::{Env, EnvState};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Gradient-free minimum-norm perturbation against a discrete victim.
///
/// The score of a candidate observation is the victim's probability of the
/// action it would take greedily at the true state. The attack keeps the
/// lowest-scoring of `samples` points on the budget sphere and then tries
/// `refine_steps` local moves inside the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnpAttack {
    pub budget: AttackBudget,
    pub samples: usize,
    pub refine_steps: usize,
}

impl MnpAttack {
    pub fn new(budget: AttackBudget) -> Self {
        Self {
            budget,
            samples: 32,
            refine_steps: 8,
        }
    }

    pub fn perturb(&self, env: &Env, victim: &Policy, state: &EnvState, rng: &mut Rng) -> Result<EnvState> {
        if !victim.is_discrete() {
            return Err(Error::Unsupported("MNP needs a discrete-action victim".into()));
        }
        let radius = self.budget.radius();
        if radius == 0.0 {
            return Ok(state.clone());
        }
        let s = env.normalize(state);
        let probs = |o: &[f64]| match victim.dist(o) {
            ActionDist::Categorical(p) => p,
            ActionDist::Gaussian { .. } => unreachable!("checked discrete"),
        };
        let target = argmax(&probs(&s));
        let score = |delta: &[f64]| {
            let o: Vec<f64> = s.iter().zip(delta).map(|(x, d)| x + d).collect();
            probs(&o)[target]
        };

        let dim = s.len();
        let mut best = vec![0.0; dim];
        let mut best_score = score(&best);
        for _ in 0..self.samples {
            let mut d = random_direction(dim, rng);
            d.iter_mut().for_each(|x| *x *= radius);
            let sc = score(&d);
            if sc < best_score {
                best_score = sc;
                best = d;
            }
        }
        let mut step = 0.5 * radius;
        for k in 0..self.refine_steps {
            let dir = random_direction(dim, rng);
            let mut cand: Vec<f64> = best.iter().zip(&dir).map(|(b, d)| b + step * d).collect();
            self.budget.project(&mut cand);
            let sc = score(&cand);
            if sc < best_score {
                best_score = sc;
                best = cand;
            }
            if k % 2 == 1 {
                step *= 0.5;
            }
        }
        self.budget.project(&mut best);
        let o: Vec<f64> = s.iter().zip(&best).map(|(x, d)| x + d).collect();
        Ok(EnvState(env.denormalize(&o)))
    }
}

fn random_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use crate::rng::seeded;

    #[test]
    fn zero_budget_is_exact() {
        let env = Env::from_kind(EnvKind::Cartpole);
        let victim = Policy::categorical_mlp(4, &[8], 2, &mut seeded(0));
        let attack = MnpAttack::new(AttackBudget::new(0.0).unwrap());
        let s = EnvState(vec![0.01, 0.2, -0.03, 0.1]);
        assert_eq!(attack.perturb(&env, &victim, &s, &mut seeded(1)).unwrap(), s);
    }

    #[test]
    fn never_raises_the_target_probability() {
        let env = Env::from_kind(EnvKind::Cartpole);
        let mut rng = seeded(4);
        let victim = Policy::categorical_mlp(4, &[8], 2, &mut rng);
        let p: Vec<f64> = victim.params().iter().map(|x| x * 50.0).collect();
        let mut victim = victim;
        victim.set_params(&p);
        let attack = MnpAttack::new(AttackBudget::new(0.2).unwrap());
        for _ in 0..50 {
            let s = env.reset(&mut rng);
            let o = attack.perturb(&env, &victim, &s, &mut rng).unwrap();
            let ActionDist::Categorical(ps) = victim.dist(&env.normalize(&s)) else { panic!() };
            let ActionDist::Categorical(po) = victim.dist(&env.normalize(&o)) else { panic!() };
            let a = argmax(&ps);
            assert!(po[a] <= ps[a] + 1e-12);
            let delta: Vec<f64> = env.normalize(&o).iter().zip(env.normalize(&s)).map(|(a, b)| a - b).collect();
            assert!(attack.budget.contains(&delta));
        }
    }

    #[test]
    fn continuous_victims_are_unsupported() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let victim = Policy::gaussian_mlp(3, &[4], vec![-2.0], vec![2.0], 0.0, &mut seeded(0));
        let attack = MnpAttack::new(AttackBudget::new(0.2).unwrap());
        let s = EnvState(vec![1.0, 0.0, 0.0]);
        assert!(matches!(attack.perturb(&env, &victim, &s, &mut seeded(0)), Err(Error::Unsupported(_))));
    }
}
