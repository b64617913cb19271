//! Per-step consistency of logged observation sequences with the unattacked
//! dynamics.

use crate::attacks::step_inconsistency;
use crate::envs::{Env, Trajectory, Transition};
use crate::error::Result;
use crate::rng::Rng;

/// [`step_inconsistency`] of every step of `traj`, recomputing the
/// predictions from the logged observations and actions.
pub fn episode_inconsistency(env: &Env, traj: &Trajectory, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(traj.len());
    let mut prediction = env.initial_mean();
    for (i, rec) in traj.records.iter().enumerate() {
        out.push(step_inconsistency(env, i == 0, &rec.observation, &prediction));
        prediction = match env.transition_sample(&rec.observation, &rec.action, rng)? {
            Transition::Next(s) => s.0,
            Transition::Terminal => env.initial_mean(),
        };
    }
    Ok(out)
}

/// Mean per-step inconsistency over all steps of all episodes.
pub fn mean_inconsistency(env: &Env, trajectories: &[Trajectory], rng: &mut Rng) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in trajectories {
        let v = episode_inconsistency(env, t, rng)?;
        sum += v.iter().sum::<f64>();
        n += v.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{evaluate_return, ActionMode, Policy};
    use crate::attacks::AttackPolicy;
    use crate::envs::EnvKind;
    use crate::rng::seeded;

    #[test]
    fn clean_and_perfect_illusory_episodes_are_consistent() {
        for kind in [EnvKind::Cartpole, EnvKind::Pendulum] {
            let env = Env::from_kind(kind);
            let victim = Policy::for_action_space(env.state_dim(), &[8], &env.spec().action_space, 0.0, &mut seeded(3));
            for attack in [None, Some(AttackPolicy::PerfectIllusory)] {
                let eval = evaluate_return(&env, &victim, attack.as_ref(), 5, 9, ActionMode::Stochastic).unwrap();
                let m = mean_inconsistency(&env, &eval.trajectories, &mut seeded(0)).unwrap();
                assert!(m < 1e-20, "{kind} {attack:?}: {m}");
            }
        }
    }
}
