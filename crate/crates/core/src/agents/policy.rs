use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{log_softmax, softmax, Activation, Mlp};
use crate::rng::Rng;

/// Lower bound on Gaussian policy scales.
pub const MIN_STD: f64 = 1e-3;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// How actions are drawn at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Sample from the policy distribution.
    #[default]
    Stochastic,
    /// Take the mode (argmax / Gaussian mean).
    Greedy,
}

/// Stochastic policy over normalised observations. Victims condition on the
/// current observation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Policy {
    /// One softmax per discrete observation; observations are one-hot.
    TabularSoftmax {
        n_obs: usize,
        n_actions: usize,
        /// Row-major `n_obs × n_actions`.
        logits: Vec<f64>,
    },
    /// Softmax over the outputs of a feed-forward network.
    CategoricalMlp { net: Mlp },
    /// Diagonal Gaussian; the mean is tanh-squashed into `[low, high]` and the
    /// log-scales are state-independent parameters.
    GaussianMlp {
        net: Mlp,
        log_std: Vec<f64>,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

/// Action distribution at one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl ActionDist {
    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical(p) => -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>(),
            ActionDist::Gaussian { std, .. } => std.iter().map(|s| s.ln() + 0.5 * (LN_2PI + 1.0)).sum(),
        }
    }
}

const ZERO_LOGIT: f64 = -1e3;

impl Policy {
    pub fn tabular_uniform(n_obs: usize, n_actions: usize) -> Self {
        Policy::TabularSoftmax {
            n_obs,
            n_actions,
            logits: vec![0.0; n_obs * n_actions],
        }
    }

    /// Tabular policy with the given probabilities. Zero entries get a
    /// logit of `ZERO_LOGIT`, whose softmax weight underflows to exactly 0;
    /// unlike `-inf` it survives a JSON round trip.
    pub fn tabular_from_probs(probs: &[Vec<f64>]) -> Self {
        let n_obs = probs.len();
        let n_actions = probs[0].len();
        let logits = probs.iter().flat_map(|row| row.iter().map(|p| p.ln().max(ZERO_LOGIT))).collect();
        Policy::TabularSoftmax { n_obs, n_actions, logits }
    }

    pub fn categorical_mlp(obs_dim: usize, hidden: &[usize], n_actions: usize, rng: &mut Rng) -> Self {
        let sizes = layer_sizes(obs_dim, hidden, n_actions);
        Policy::CategoricalMlp {
            net: Mlp::new(&sizes, Activation::Tanh, 0.01, rng),
        }
    }

    pub fn gaussian_mlp(
        obs_dim: usize,
        hidden: &[usize],
        low: Vec<f64>,
        high: Vec<f64>,
        init_log_std: f64,
        rng: &mut Rng,
    ) -> Self {
        let sizes = layer_sizes(obs_dim, hidden, low.len());
        Policy::GaussianMlp {
            net: Mlp::new(&sizes, Activation::Tanh, 0.01, rng),
            log_std: vec![init_log_std; low.len()],
            low,
            high,
        }
    }

    /// Builds the architecture matching `space`.
    pub fn for_action_space(
        obs_dim: usize,
        hidden: &[usize],
        space: &ActionSpace,
        init_log_std: f64,
        rng: &mut Rng,
    ) -> Self {
        match space {
            ActionSpace::Discrete { n } => Self::categorical_mlp(obs_dim, hidden, *n, rng),
            ActionSpace::Box { low, high } => {
                Self::gaussian_mlp(obs_dim, hidden, low.clone(), high.clone(), init_log_std, rng)
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Policy::GaussianMlp { .. })
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Policy::TabularSoftmax { n_obs, .. } => *n_obs,
            Policy::CategoricalMlp { net } | Policy::GaussianMlp { net, .. } => net.input_dim(),
        }
    }

    fn tabular_row(n_obs: usize, obs: &[f64]) -> usize {
        debug_assert_eq!(obs.len(), n_obs);
        obs.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
            .0
    }

    pub fn dist(&self, obs: &[f64]) -> ActionDist {
        match self {
            Policy::TabularSoftmax { n_obs, n_actions, logits } => {
                let row = Self::tabular_row(*n_obs, obs);
                ActionDist::Categorical(softmax(&logits[row * n_actions..(row + 1) * n_actions]))
            }
            Policy::CategoricalMlp { net } => ActionDist::Categorical(softmax(&net.forward(obs))),
            Policy::GaussianMlp { net, log_std, low, high } => {
                let z = net.forward(obs);
                ActionDist::Gaussian {
                    mean: squash(&z, low, high),
                    std: log_std.iter().map(|l| l.exp().max(MIN_STD)).collect(),
                }
            }
        }
    }

    pub fn act(&self, obs: &[f64], mode: ActionMode, rng: &mut Rng) -> Action {
        match (self.dist(obs), mode) {
            (ActionDist::Categorical(p), ActionMode::Greedy) => Action::Discrete(argmax(&p)),
            (ActionDist::Categorical(p), ActionMode::Stochastic) => Action::Discrete(sample_categorical(&p, rng)),
            (ActionDist::Gaussian { mean, .. }, ActionMode::Greedy) => Action::Continuous(mean),
            (ActionDist::Gaussian { mean, std }, ActionMode::Stochastic) => Action::Continuous(
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let n: f64 = StandardNormal.sample(rng);
                        m + s * n
                    })
                    .collect(),
            ),
        }
    }

    /// Log-probability (or log-density) of `action`. Zero-probability
    /// actions give `-inf`.
    pub fn log_prob(&self, obs: &[f64], action: &Action) -> Result<f64> {
        match (self, action) {
            (Policy::TabularSoftmax { n_obs, n_actions, logits }, Action::Discrete(a)) => {
                let row = Self::tabular_row(*n_obs, obs);
                check_index(*a, *n_actions)?;
                Ok(log_softmax(&logits[row * n_actions..(row + 1) * n_actions])[*a])
            }
            (Policy::CategoricalMlp { net }, Action::Discrete(a)) => {
                let z = net.forward(obs);
                check_index(*a, z.len())?;
                Ok(log_softmax(&z)[*a])
            }
            (Policy::GaussianMlp { .. }, Action::Continuous(u)) => {
                let ActionDist::Gaussian { mean, std } = self.dist(obs) else { unreachable!() };
                if u.len() != mean.len() {
                    return Err(Error::InvalidAction(format!("expected {} dims, got {}", mean.len(), u.len())));
                }
                Ok(gaussian_log_density(u, &mean, &std))
            }
            _ => Err(Error::InvalidAction(format!("action {action:?} does not match policy"))),
        }
    }

    /// Log-probability under the policy run in `mode`. In greedy mode the
    /// policy is a point mass: 0 for the greedy action, `-inf` otherwise.
    pub fn log_prob_in_mode(&self, obs: &[f64], action: &Action, mode: ActionMode) -> Result<f64> {
        match mode {
            ActionMode::Stochastic => self.log_prob(obs, action),
            ActionMode::Greedy => {
                let mut dummy = crate::rng::seeded(0);
                let greedy = self.act(obs, ActionMode::Greedy, &mut dummy);
                Ok(if &greedy == action { 0.0 } else { f64::NEG_INFINITY })
            }
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Policy::TabularSoftmax { logits, .. } => logits.len(),
            Policy::CategoricalMlp { net } => net.num_params(),
            Policy::GaussianMlp { net, log_std, .. } => net.num_params() + log_std.len(),
        }
    }

    /// Flat parameter vector (network parameters, then log-scales).
    pub fn params(&self) -> Vec<f64> {
        match self {
            Policy::TabularSoftmax { logits, .. } => logits.clone(),
            Policy::CategoricalMlp { net } => net.params().to_vec(),
            Policy::GaussianMlp { net, log_std, .. } => {
                let mut p = net.params().to_vec();
                p.extend_from_slice(log_std);
                p
            }
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        match self {
            Policy::TabularSoftmax { logits, .. } => logits.copy_from_slice(flat),
            Policy::CategoricalMlp { net } => net.params_mut().copy_from_slice(flat),
            Policy::GaussianMlp { net, log_std, .. } => {
                let n = net.num_params();
                net.params_mut().copy_from_slice(&flat[..n]);
                log_std.copy_from_slice(&flat[n..]);
            }
        }
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in self.params() {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Accumulates into `grad` the gradient w.r.t. the flat parameters of
    /// `coef_logp · log π(a|o) + coef_entropy · H[π(·|o)]`. Returns
    /// `(log π(a|o), H)`.
    pub fn accumulate_grad(
        &self,
        obs: &[f64],
        action: &Action,
        coef_logp: f64,
        coef_entropy: f64,
        grad: &mut [f64],
    ) -> Result<(f64, f64)> {
        match (self, action) {
            (Policy::TabularSoftmax { n_obs, n_actions, logits }, Action::Discrete(a)) => {
                check_index(*a, *n_actions)?;
                let row = Self::tabular_row(*n_obs, obs);
                let z = &logits[row * n_actions..(row + 1) * n_actions];
                let (logp, entropy, dz) = categorical_grad(z, *a, coef_logp, coef_entropy);
                for (k, d) in dz.iter().enumerate() {
                    grad[row * n_actions + k] += d;
                }
                Ok((logp, entropy))
            }
            (Policy::CategoricalMlp { net }, Action::Discrete(a)) => {
                let trace = net.forward_trace(obs);
                check_index(*a, trace.output().len())?;
                let (logp, entropy, dz) = categorical_grad(trace.output(), *a, coef_logp, coef_entropy);
                net.backward(&trace, &dz, grad);
                Ok((logp, entropy))
            }
            (Policy::GaussianMlp { net, log_std, low, high }, Action::Continuous(u)) => {
                let trace = net.forward_trace(obs);
                let z = trace.output();
                let n = net.num_params();
                let mut dz = vec![0.0; z.len()];
                let mut logp = 0.0;
                let mut entropy = 0.0;
                for i in 0..z.len() {
                    let t = z[i].tanh();
                    let half = 0.5 * (high[i] - low[i]);
                    let mean = 0.5 * (high[i] + low[i]) + half * t;
                    let raw_std = log_std[i].exp();
                    let std = raw_std.max(MIN_STD);
                    let diff = u[i] - mean;
                    logp += -0.5 * (diff / std).powi(2) - std.ln() - 0.5 * LN_2PI;
                    entropy += std.ln() + 0.5 * (LN_2PI + 1.0);
                    dz[i] = coef_logp * diff / (std * std) * half * (1.0 - t * t);
                    if raw_std > MIN_STD {
                        grad[n + i] += coef_logp * ((diff / std).powi(2) - 1.0) + coef_entropy;
                    }
                }
                net.backward(&trace, &dz, &mut grad[..n]);
                Ok((logp, entropy))
            }
            _ => Err(Error::InvalidAction(format!("action {action:?} does not match policy"))),
        }
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

fn check_index(a: usize, n: usize) -> Result<()> {
    if a < n {
        Ok(())
    } else {
        Err(Error::InvalidAction(format!("discrete action {a} outside 0..{n}")))
    }
}

fn squash(z: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(low.iter().zip(high))
        .map(|(z, (lo, hi))| 0.5 * (hi + lo) + 0.5 * (hi - lo) * z.tanh())
        .collect()
}

/// `(log p_a, H, d/dz [c_logp · log p_a + c_ent · H])` for softmax logits `z`.
fn categorical_grad(z: &[f64], a: usize, coef_logp: f64, coef_entropy: f64) -> (f64, f64, Vec<f64>) {
    let logp = log_softmax(z);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let entropy: f64 = -p.iter().zip(&logp).filter(|(pi, _)| **pi > 0.0).map(|(pi, l)| pi * l).sum::<f64>();
    let dz = (0..z.len())
        .map(|k| {
            let indicator = if k == a { 1.0 } else { 0.0 };
            let lk = if p[k] > 0.0 { logp[k] } else { 0.0 };
            coef_logp * (indicator - p[k]) - coef_entropy * p[k] * (lk + entropy)
        })
        .collect();
    (logp[a], entropy, dz)
}

pub fn gaussian_log_density(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean.iter().zip(std))
        .map(|(x, (m, s))| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * LN_2PI)
        .sum()
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|x| *x > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn objective(policy: &Policy, obs: &[f64], action: &Action, cl: f64, ce: f64) -> f64 {
        cl * policy.log_prob(obs, action).unwrap() + ce * policy.dist(obs).entropy()
    }

    fn check_grad(policy: &Policy, obs: &[f64], action: &Action) {
        let (cl, ce) = (0.7, 0.3);
        let mut grad = vec![0.0; policy.num_params()];
        policy.accumulate_grad(obs, action, cl, ce, &mut grad).unwrap();
        let base = policy.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut plus = policy.clone();
            let mut p = base.clone();
            p[i] += h;
            plus.set_params(&p);
            let mut minus = policy.clone();
            p[i] -= 2.0 * h;
            minus.set_params(&p);
            let fd = (objective(&plus, obs, action, cl, ce) - objective(&minus, obs, action, cl, ce)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-5 * (1.0 + grad[i].abs()), "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(5);
        let cat = Policy::categorical_mlp(4, &[6], 3, &mut rng);
        check_grad(&cat, &[0.1, -0.2, 0.3, 0.05], &Action::Discrete(2));
        let mut gauss = Policy::gaussian_mlp(3, &[5], vec![-2.0], vec![2.0], -0.3, &mut rng);
        let p: Vec<f64> = gauss.params().iter().map(|x| x * 20.0).collect();
        gauss.set_params(&p);
        check_grad(&gauss, &[0.4, -0.9, 0.2], &Action::Continuous(vec![0.7]));
        let mut tab = Policy::tabular_uniform(2, 2);
        tab.set_params(&[0.3, -0.4, 1.0, 0.2]);
        check_grad(&tab, &[0.0, 1.0], &Action::Discrete(0));
    }

    #[test]
    fn log_prob_closed_forms() {
        let uniform = Policy::tabular_uniform(2, 2);
        assert!((uniform.log_prob(&[1.0, 0.0], &Action::Discrete(1)).unwrap() - 0.5f64.ln()).abs() < 1e-15);

        let greedy = Policy::tabular_from_probs(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(greedy.log_prob(&[1.0, 0.0], &Action::Discrete(0)).unwrap(), 0.0);
        assert!(greedy.log_prob(&[1.0, 0.0], &Action::Discrete(1)).unwrap() <= ZERO_LOGIT);
        let ActionDist::Categorical(p) = greedy.dist(&[1.0, 0.0]) else { panic!() };
        assert_eq!(p, vec![1.0, 0.0]);
        let json = serde_json::to_string(&greedy).unwrap();
        assert_eq!(serde_json::from_str::<Policy>(&json).unwrap(), greedy);

        let mut rng = seeded(1);
        let g = Policy::gaussian_mlp(3, &[4], vec![-2.0], vec![2.0], 0.2f64.ln(), &mut rng);
        let ActionDist::Gaussian { mean, std } = g.dist(&[0.1, 0.2, 0.3]) else { panic!() };
        let lp = g.log_prob(&[0.1, 0.2, 0.3], &Action::Continuous(mean.clone())).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * std[0] * std[0]).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn greedy_mode_is_point_mass() {
        let p = Policy::tabular_from_probs(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        let obs = [0.0, 1.0];
        assert_eq!(p.log_prob_in_mode(&obs, &Action::Discrete(1), ActionMode::Greedy).unwrap(), 0.0);
        assert_eq!(
            p.log_prob_in_mode(&obs, &Action::Discrete(0), ActionMode::Greedy).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn scale_floor_applies() {
        let mut rng = seeded(3);
        let mut g = Policy::gaussian_mlp(2, &[], vec![-1.0], vec![1.0], 0.0, &mut rng);
        let mut p = g.params();
        *p.last_mut().unwrap() = -50.0;
        g.set_params(&p);
        let ActionDist::Gaussian { std, .. } = g.dist(&[0.0, 0.0]) else { panic!() };
        assert_eq!(std[0], MIN_STD);
    }
}
