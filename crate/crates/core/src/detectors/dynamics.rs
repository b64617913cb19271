//! Probabilistic one-step dynamics model used as an anomaly scorer.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::{ActionSpace, Env, EnvKind, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp};
use crate::rng::seeded;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
const MIN_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    /// Hidden layer sizes; empty gives a linear model.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training transitions are subsampled to at most this many.
    pub max_transitions: usize,
    pub min_transitions: usize,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 30,
            batch_size: 128,
            learning_rate: 3e-3,
            max_transitions: 100_000,
            min_transitions: 1_000,
            seed: 0,
        }
    }
}

/// One `(o_t, a_t, o_{t+1})` triple in normalised units, with the encoded
/// action.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next: Vec<f64>,
}

/// Consecutive observed transitions of a logged episode.
pub fn observed_transitions(env: &Env, traj: &Trajectory) -> Vec<Transition> {
    let space = env.spec().action_space;
    traj.records
        .windows(2)
        .map(|w| Transition {
            obs: env.normalize(&w[0].observation),
            action: w[0].action.encode(&space),
            next: env.normalize(&w[1].observation),
        })
        .collect()
}

/// Gaussian model of `o_{t+1} − o_t` given `(o_t, a_t)`: the mean comes from
/// a feed-forward network on standardised inputs, the per-dimension scale
/// is the maximum-likelihood residual scale on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsScorer {
    pub env: EnvKind,
    pub action_space: ActionSpace,
    pub net: Mlp,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    /// Residual scale in standardised target units.
    pub sigma: Vec<f64>,
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m).powi(2) / n;
        }
    }
    let std = var.into_iter().map(|v| v.sqrt().max(1e-8)).collect();
    (mean, std)
}

fn standardise(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter().zip(mean.iter().zip(std)).map(|(x, (m, s))| (x - m) / s).collect()
}

impl DynamicsScorer {
    fn input(&self, t: &Transition) -> Vec<f64> {
        let mut x = t.obs.clone();
        x.extend_from_slice(&t.action);
        standardise(&x, &self.input_mean, &self.input_std)
    }

    fn target(&self, t: &Transition) -> Vec<f64> {
        let delta: Vec<f64> = t.next.iter().zip(&t.obs).map(|(n, o)| n - o).collect();
        standardise(&delta, &self.target_mean, &self.target_std)
    }

    /// Residual of the predicted mean, in standardised target units.
    pub fn residual(&self, t: &Transition) -> Vec<f64> {
        let pred = self.net.forward(&self.input(t));
        self.target(t).iter().zip(&pred).map(|(y, p)| y - p).collect()
    }

    /// Negative log-likelihood of `o_{t+1}` in normalised observation units.
    pub fn score(&self, t: &Transition) -> f64 {
        self.residual(t)
            .iter()
            .zip(self.sigma.iter().zip(&self.target_std))
            .map(|(r, (s, ts))| 0.5 * (r / s).powi(2) + s.ln() + ts.ln() + HALF_LN_2PI)
            .sum()
    }

    /// Per-step scores of a logged episode (one fewer than its length).
    pub fn score_episode(&self, env: &Env, traj: &Trajectory) -> Vec<f64> {
        observed_transitions(env, traj).iter().map(|t| self.score(t)).collect()
    }
}

/// Fits the scorer on unattacked episodes.
pub fn train_dynamics_scorer(env: &Env, trajectories: &[Trajectory], config: &ScorerConfig) -> Result<DynamicsScorer> {
    let mut data: Vec<Transition> = trajectories.iter().flat_map(|t| observed_transitions(env, t)).collect();
    if data.len() < config.min_transitions.max(2) {
        return Err(Error::InsufficientData(format!(
            "{} transitions, need at least {}",
            data.len(),
            config.min_transitions
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("scorer epochs, batch size and learning rate must be positive".into()));
    }
    let mut rng = seeded(config.seed);
    if data.len() > config.max_transitions {
        data.shuffle(&mut rng);
        data.truncate(config.max_transitions);
    }
    let inputs: Vec<Vec<f64>> = data
        .iter()
        .map(|t| {
            let mut x = t.obs.clone();
            x.extend_from_slice(&t.action);
            x
        })
        .collect();
    let deltas: Vec<Vec<f64>> = data.iter().map(|t| t.next.iter().zip(&t.obs).map(|(n, o)| n - o).collect()).collect();
    let (input_mean, input_std) = column_stats(&inputs);
    let (target_mean, target_std) = column_stats(&deltas);
    let d_out = deltas[0].len();
    let mut sizes = vec![inputs[0].len()];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(d_out);
    let mut scorer = DynamicsScorer {
        env: env.kind(),
        action_space: env.spec().action_space,
        net: Mlp::new(&sizes, Activation::Tanh, 1.0, &mut rng),
        input_mean,
        input_std,
        target_mean,
        target_std,
        sigma: vec![1.0; d_out],
    };
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| standardise(x, &scorer.input_mean, &scorer.input_std)).collect();
    let ys: Vec<Vec<f64>> = deltas.iter().map(|y| standardise(y, &scorer.target_mean, &scorer.target_std)).collect();

    let mut adam = Adam::new(scorer.net.num_params(), config.learning_rate);
    let mut grad = vec![0.0; scorer.net.num_params()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let total_batches = config.epochs * xs.len().div_ceil(config.batch_size);
    let mut batch_no = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            // Cosine decay to a tenth of the initial rate.
            let progress = batch_no as f64 / total_batches as f64;
            adam.lr = config.learning_rate * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * progress).cos()));
            batch_no += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let trace = scorer.net.forward_trace(&xs[i]);
                let g: Vec<f64> = trace.output().iter().zip(&ys[i]).map(|(p, y)| (p - y) * scale).collect();
                scorer.net.backward(&trace, &g, &mut grad);
            }
            adam.step(scorer.net.params_mut(), &grad);
        }
    }
    let mut sq = vec![0.0; d_out];
    for (x, y) in xs.iter().zip(&ys) {
        let p = scorer.net.forward(x);
        for ((s, p), y) in sq.iter_mut().zip(&p).zip(y) {
            *s += (y - p).powi(2);
        }
    }
    scorer.sigma = sq.iter().map(|s| (s / xs.len() as f64).sqrt().max(MIN_SIGMA)).collect();
    if scorer.net.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::TrainingFailure("dynamics model diverged".into()));
    }
    Ok(scorer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{evaluate_return, ActionMode, Policy};
    use crate::rng::seeded;

    #[test]
    fn refuses_small_datasets() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let victim = Policy::gaussian_mlp(3, &[8], vec![-2.0], vec![2.0], 0.0, &mut seeded(0));
        let eval = evaluate_return(&env, &victim, None, 2, 0, ActionMode::Stochastic).unwrap();
        let err = train_dynamics_scorer(&env, &eval.trajectories, &ScorerConfig::default());
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pendulum_model_fits_random_play() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let victim = Policy::gaussian_mlp(3, &[8], vec![-2.0], vec![2.0], 0.0, &mut seeded(0));
        let train = evaluate_return(&env, &victim, None, 40, 1, ActionMode::Stochastic).unwrap();
        let scorer = train_dynamics_scorer(&env, &train.trajectories, &ScorerConfig::default()).unwrap();
        let held = evaluate_return(&env, &victim, None, 10, 2, ActionMode::Stochastic).unwrap();
        let clean: Vec<f64> = held.trajectories.iter().flat_map(|t| scorer.score_episode(&env, t)).collect();
        let mean = clean.iter().sum::<f64>() / clean.len() as f64;
        // Standardised residuals well below one means the model explains most
        // of the variation.
        assert!(scorer.sigma.iter().all(|s| *s < 0.1), "{:?}", scorer.sigma);
        assert!(mean.is_finite());
    }
}

