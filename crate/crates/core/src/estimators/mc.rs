use super::{KlEstimate, KlMethod};
use crate::attacks::AttackPolicy;
use crate::envs::{EnvState, Trajectory};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Attacks whose emissions have a tractable log-density `log ν(o | s, ·)`.
pub trait EmissionDensity {
    fn log_density(&self, state: &[f64], observation: &[f64], t: usize) -> Result<f64>;
}

impl EmissionDensity for AttackPolicy {
    fn log_density(&self, state: &[f64], observation: &[f64], _t: usize) -> Result<f64> {
        match self {
            AttackPolicy::Identity => Ok(if state == observation { 0.0 } else { f64::NEG_INFINITY }),
            AttackPolicy::Tabular(t) => t.log_density(state, observation),
            other => Err(Error::Unsupported(format!(
                "{} attack has no tractable emission density",
                other.kind()
            ))),
        }
    }
}

/// Jensen upper bound on the cross-entropy between the unattacked and the
/// attacked observation processes:
/// `−(1/N) Σ_i Σ_t log ν(o_t^i | s̃_t^i)`, where the observations come from
/// unattacked trajectories and every `s̃_t^i` is drawn independently from
/// `state_sampler(t, rng)`. The victim factor is omitted. The standard
/// error is the per-trajectory sample deviation over `√N`.
pub fn mc_cross_entropy_upper<A, F>(
    attack: &A,
    unattacked: &[Trajectory],
    mut state_sampler: F,
    rng: &mut Rng,
) -> Result<KlEstimate>
where
    A: EmissionDensity + ?Sized,
    F: FnMut(usize, &mut Rng) -> EnvState,
{
    if unattacked.is_empty() {
        return Err(Error::InsufficientData("no trajectories to estimate from".into()));
    }
    let mut per_traj = Vec::with_capacity(unattacked.len());
    for traj in unattacked {
        let mut h = 0.0;
        for rec in &traj.records {
            let s = state_sampler(rec.t, rng);
            h -= attack.log_density(&s, &rec.observation, rec.t)?;
        }
        per_traj.push(h);
    }
    let n = per_traj.len() as f64;
    let mean = per_traj.iter().sum::<f64>() / n;
    let stderr = if per_traj.len() > 1 {
        let var = per_traj.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(KlEstimate {
        value: mean,
        stderr,
        samples: per_traj.len(),
        method: KlMethod::McUpperBound,
    })
}
