//! Environments: the one-step stochastic MDP, CartPole and Pendulum.
//!
//! Environments are value-like. `step` takes the current state explicitly
//! and returns the next one, so the same instance can be shared read-only
//! across parallel rollouts. `transition_sample` exposes the unattacked
//! transition function, which is the adversary's privilege.

mod cartpole;
mod log;
mod one_step;
mod pendulum;

pub use cartpole::CartPole;
pub use log::{read_jsonl, write_jsonl, LogHeader, LogLine, Trajectory, TransitionRecord};
pub use one_step::OneStepMdp;
pub use pendulum::Pendulum;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A point in an environment's state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvState(pub Vec<f64>);

impl EnvState {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Deref for EnvState {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Feature encoding used by dynamics models and adversaries: one-hot
    /// for discrete actions, bound-normalised values for continuous ones.
    pub fn encode(&self, space: &ActionSpace) -> Vec<f64> {
        match (self, space) {
            (Action::Discrete(a), ActionSpace::Discrete { n }) => {
                let mut v = vec![0.0; *n];
                if *a < *n {
                    v[*a] = 1.0;
                }
                v
            }
            (Action::Continuous(u), ActionSpace::Box { low, high }) => u
                .iter()
                .zip(low.iter().zip(high))
                .map(|(x, (lo, hi))| {
                    let c = 0.5 * (lo + hi);
                    let h = 0.5 * (hi - lo);
                    ((x.clamp(*lo, *hi)) - c) / h
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActionSpace {
    Discrete { n: usize },
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Width of the [`Action::encode`] vector.
    pub fn encoded_dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { n } => *n,
            ActionSpace::Box { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Rejects discrete indices out of range and continuous actions with the
    /// wrong dimension or non-finite entries. Continuous values outside the
    /// box are accepted here and clipped by the environment.
    pub fn validate(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) if a < n => Ok(()),
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => Err(Error::InvalidAction(format!(
                "discrete action {a} outside 0..{n}"
            ))),
            (ActionSpace::Box { low, .. }, Action::Continuous(u)) => {
                if u.len() != low.len() {
                    Err(Error::InvalidAction(format!(
                        "expected {} action dims, got {}",
                        low.len(),
                        u.len()
                    )))
                } else if u.iter().any(|v| !v.is_finite()) {
                    Err(Error::InvalidAction("non-finite action".into()))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::InvalidAction(format!(
                "action {action:?} does not match space {self:?}"
            ))),
        }
    }
}

/// Initial-state distribution descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialDist {
    /// Categorical over one-hot encoded states.
    Categorical { probs: Vec<f64> },
    /// Independent uniform per dimension.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    /// Angle uniform on `theta`, angular velocity uniform on `theta_dot`,
    /// embedded as `(cos θ, sin θ, θ̇)`.
    UniformAngle { theta: [f64; 2], theta_dot: [f64; 2] },
}

impl InitialDist {
    pub fn sample(&self, rng: &mut Rng) -> EnvState {
        match self {
            InitialDist::Categorical { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                let mut v = vec![0.0; probs.len()];
                v[idx] = 1.0;
                EnvState(v)
            }
            InitialDist::UniformBox { low, high } => EnvState(
                low.iter()
                    .zip(high)
                    .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                    .collect(),
            ),
            InitialDist::UniformAngle { theta, theta_dot } => {
                let th: f64 = rng.random_range(theta[0]..=theta[1]);
                let thd: f64 = rng.random_range(theta_dot[0]..=theta_dot[1]);
                EnvState(vec![th.cos(), th.sin(), thd])
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            InitialDist::Categorical { probs } => probs.clone(),
            InitialDist::UniformBox { low, high } => {
                low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect()
            }
            InitialDist::UniformAngle { theta, theta_dot } => {
                let (a, b) = (theta[0], theta[1]);
                let width = b - a;
                let (c, s) = if width > 0.0 {
                    ((b.sin() - a.sin()) / width, (a.cos() - b.cos()) / width)
                } else {
                    (a.cos(), a.sin())
                };
                vec![c, s, 0.5 * (theta_dot[0] + theta_dot[1])]
            }
        }
    }

    /// Nearest point of the support (Euclidean in raw units; for the angle
    /// law, the nearest admissible angle on the unit circle).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            InitialDist::Categorical { probs } => {
                let best = (0..probs.len())
                    .filter(|&i| probs[i] > 0.0)
                    .max_by(|&i, &j| x[i].total_cmp(&x[j]))
                    .unwrap_or(0);
                let mut v = vec![0.0; probs.len()];
                v[best] = 1.0;
                v
            }
            InitialDist::UniformBox { low, high } => {
                x.iter().zip(low.iter().zip(high)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
            }
            InitialDist::UniformAngle { theta, theta_dot } => {
                let angle = x[1].atan2(x[0]);
                let th = if theta[1] - theta[0] >= 2.0 * std::f64::consts::PI - 1e-12 {
                    angle
                } else {
                    angle.clamp(theta[0], theta[1])
                };
                vec![th.cos(), th.sin(), x[2].clamp(theta_dot[0], theta_dot[1])]
            }
        }
    }

    /// Whether the pushforward under `x ↦ 2p − x` equals the distribution.
    pub fn is_symmetric_about(&self, point: &[f64]) -> bool {
        const TOL: f64 = 1e-12;
        match self {
            InitialDist::Categorical { probs } => {
                let n = probs.len();
                if point.len() != n {
                    return false;
                }
                // 2p − e_i must itself be a one-hot vector e_j with equal mass.
                (0..n).all(|i| {
                    if probs[i] == 0.0 {
                        return true;
                    }
                    let image: Vec<f64> = (0..n)
                        .map(|k| 2.0 * point[k] - if k == i { 1.0 } else { 0.0 })
                        .collect();
                    let ones: Vec<usize> = (0..n).filter(|&k| (image[k] - 1.0).abs() < TOL).collect();
                    let zeros = (0..n).filter(|&k| image[k].abs() < TOL).count();
                    ones.len() == 1 && zeros == n - 1 && (probs[ones[0]] - probs[i]).abs() < TOL
                })
            }
            InitialDist::UniformBox { low, high } => {
                point.len() == low.len()
                    && low
                        .iter()
                        .zip(high)
                        .zip(point)
                        .all(|((l, h), p)| (0.5 * (l + h) - p).abs() < TOL)
            }
            InitialDist::UniformAngle { theta, theta_dot } => {
                // Negating (cos θ, sin θ) is a rotation by π; the angle law is
                // invariant under it only when it covers a full turn.
                point.len() == 3
                    && point.iter().all(|p| p.abs() < TOL)
                    && ((theta[1] - theta[0]) - 2.0 * std::f64::consts::PI).abs() < 1e-9
                    && (theta_dot[0] + theta_dot[1]).abs() < TOL
            }
        }
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvKind,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub horizon: usize,
    pub gamma: f64,
    pub symmetry_point: Vec<f64>,
    pub initial: InitialDist,
    /// Per-dimension constant maxima used to normalise observations.
    pub obs_scale: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    OneStep,
    Cartpole,
    Pendulum,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::OneStep => "one-step",
            EnvKind::Cartpole => "cartpole",
            EnvKind::Pendulum => "pendulum",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-step" | "onestep" | "one_step" => Ok(EnvKind::OneStep),
            "cartpole" | "cart-pole" => Ok(EnvKind::Cartpole),
            "pendulum" => Ok(EnvKind::Pendulum),
            other => Err(Error::Config(format!("unknown environment '{other}'"))),
        }
    }
}

/// Outcome of [`Env::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Outcome of [`Env::transition_sample`].
#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    Next(EnvState),
    /// The environment has no successor state (single-step environments).
    Terminal,
}

impl Transition {
    pub fn state(&self) -> Option<&EnvState> {
        match self {
            Transition::Next(s) => Some(s),
            Transition::Terminal => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "kebab-case")]
pub enum Env {
    OneStep(OneStepMdp),
    Cartpole(CartPole),
    Pendulum(Pendulum),
}

impl Env {
    pub fn from_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::OneStep => Env::OneStep(OneStepMdp::default()),
            EnvKind::Cartpole => Env::Cartpole(CartPole::default()),
            EnvKind::Pendulum => Env::Pendulum(Pendulum::default()),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Env::OneStep(_) => EnvKind::OneStep,
            Env::Cartpole(_) => EnvKind::Cartpole,
            Env::Pendulum(_) => EnvKind::Pendulum,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        match self {
            Env::OneStep(e) => e.spec(),
            Env::Cartpole(e) => e.spec(),
            Env::Pendulum(e) => e.spec(),
        }
    }

    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        match self {
            Env::OneStep(e) => e.initial().sample(rng),
            Env::Cartpole(e) => e.initial().sample(rng),
            Env::Pendulum(e) => e.initial().sample(rng),
        }
    }

    /// Advances `state` by one step. `t` is the index of the step being taken.
    /// The bundled environments are deterministic given the action, so the
    /// generator is not consumed.
    pub fn step(&self, state: &EnvState, t: usize, action: &Action, _rng: &mut Rng) -> Result<Step> {
        self.check_state(state)?;
        match self {
            Env::OneStep(e) => e.step(state, action),
            Env::Cartpole(e) => e.step(state, t, action),
            Env::Pendulum(e) => e.step(state, t, action),
        }
    }

    /// One sample from the unattacked transition function applied to an
    /// arbitrary (possibly fabricated) state. Termination is ignored.
    pub fn transition_sample(&self, state: &[f64], action: &Action, _rng: &mut Rng) -> Result<Transition> {
        let spec_dim = self.state_dim();
        if state.len() != spec_dim {
            return Err(Error::InvalidState(format!(
                "expected {spec_dim} state dims, got {}",
                state.len()
            )));
        }
        match self {
            Env::OneStep(e) => {
                e.spec().action_space.validate(action)?;
                Ok(Transition::Terminal)
            }
            Env::Cartpole(e) => Ok(Transition::Next(e.dynamics(state, action)?)),
            Env::Pendulum(e) => Ok(Transition::Next(e.dynamics(state, action)?.0)),
        }
    }

    pub fn initial(&self) -> InitialDist {
        match self {
            Env::OneStep(e) => e.initial(),
            Env::Cartpole(e) => e.initial(),
            Env::Pendulum(e) => e.initial(),
        }
    }

    /// Mean of the initial-state distribution (for the one-step MDP this is
    /// the categorical probability vector).
    pub fn initial_mean(&self) -> Vec<f64> {
        self.initial().mean()
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Env::OneStep(_) => 2,
            Env::Cartpole(_) => 4,
            Env::Pendulum(_) => 3,
        }
    }

    pub fn horizon(&self) -> usize {
        self.spec().horizon
    }

    pub fn obs_scale(&self) -> Vec<f64> {
        self.spec().obs_scale
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        let scale = self.obs_scale();
        raw.iter().zip(&scale).map(|(x, s)| x / s).collect()
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Vec<f64> {
        let scale = self.obs_scale();
        normalized.iter().zip(&scale).map(|(x, s)| x * s).collect()
    }

    fn check_state(&self, state: &EnvState) -> Result<()> {
        if state.dim() != self.state_dim() {
            return Err(Error::InvalidState(format!(
                "expected {} state dims, got {}",
                self.state_dim(),
                state.dim()
            )));
        }
        if !state.is_finite() {
            return Err(Error::InvalidState("non-finite state".into()));
        }
        Ok(())
    }
}

/// Euclidean norm of `a − b`.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn categorical_symmetry_requires_equal_mass() {
        let asym = InitialDist::Categorical { probs: vec![1.0 / 3.0, 2.0 / 3.0] };
        assert!(!asym.is_symmetric_about(&[0.5, 0.5]));
        let sym = InitialDist::Categorical { probs: vec![0.5, 0.5] };
        assert!(sym.is_symmetric_about(&[0.5, 0.5]));
    }

    #[test]
    fn projection_onto_support() {
        let cp = CartPole::default().initial();
        assert_eq!(cp.project(&[0.2, -0.01, 0.0, -1.0]), vec![0.05, -0.01, 0.0, -0.05]);
        let pd = Pendulum::default().initial();
        let p = pd.project(&[0.0, 2.0, 3.0]);
        assert!((p[0]).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15 && p[2] == 1.0);
        let mut rng = seeded(4);
        for _ in 0..20 {
            let x = pd.sample(&mut rng);
            let q = pd.project(&x.0);
            assert!(l2_distance(&x.0, &q) < 1e-12);
        }
    }

    #[test]
    fn box_and_angle_symmetry() {
        let cp = CartPole::default().initial();
        assert!(cp.is_symmetric_about(&[0.0; 4]));
        assert!(!cp.is_symmetric_about(&[0.01, 0.0, 0.0, 0.0]));
        let pd = Pendulum::default().initial();
        assert!(pd.is_symmetric_about(&[0.0; 3]));
    }

    #[test]
    fn action_encoding() {
        let d = ActionSpace::Discrete { n: 2 };
        assert_eq!(Action::Discrete(1).encode(&d), vec![0.0, 1.0]);
        let b = ActionSpace::Box { low: vec![-2.0], high: vec![2.0] };
        assert_eq!(Action::Continuous(vec![1.0]).encode(&b), vec![0.5]);
        assert_eq!(Action::Continuous(vec![5.0]).encode(&b), vec![1.0]);
    }

    #[test]
    fn invalid_action_dimension_rejected() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let mut rng = seeded(0);
        let s = env.reset(&mut rng);
        let err = env.step(&s, 0, &Action::Continuous(vec![0.0, 1.0]), &mut rng);
        assert!(matches!(err, Err(Error::InvalidAction(_))));
        let env = Env::from_kind(EnvKind::Cartpole);
        let s = env.reset(&mut rng);
        assert!(env.step(&s, 0, &Action::Discrete(2), &mut rng).is_err());
    }
}
