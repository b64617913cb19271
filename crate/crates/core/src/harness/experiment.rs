//! Seeded evaluation of a victim under a set of attacks, with detection and
//! scoring.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ResolvedAttack};
use super::scoring::{adversary_score, detection_adjusted_score};
use crate::agents::{evaluate_return, mean_std, ActionMode, Policy, PolicyCheckpoint};
use crate::attacks::AttackKind;
use crate::detectors::{DecisionRuleParams, Detector, DetectorCheckpoint, DetectorVerdict};
use crate::envs::{write_jsonl, Env, EnvKind, LogHeader, Trajectory};
use crate::error::{Error, Result};
use crate::estimators::mean_inconsistency;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub detection_rate: f64,
    /// Mean per-step squared inconsistency with the unattacked dynamics.
    pub inconsistency: f64,
    pub returns: Vec<f64>,
    pub verdicts: Vec<DetectorVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSeed {
    pub seed: u64,
    pub error: String,
}

/// Aggregate over all seeds of one arm (unattacked or one attack).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub label: String,
    pub kind: Option<AttackKind>,
    pub budget: Option<f64>,
    pub epsilon: Option<f64>,
    /// Mean and standard deviation over all episodes of all seeds.
    pub mean: f64,
    pub std: f64,
    /// Standard deviation of the per-seed means.
    pub seed_std: f64,
    pub detection_rate: f64,
    pub inconsistency: f64,
    pub adversary_score: f64,
    pub detection_adjusted_score: f64,
    pub seeds: Vec<SeedResult>,
    pub missing_seeds: Vec<MissingSeed>,
}

impl ArmResult {
    pub fn returns(&self) -> Vec<f64> {
        self.seeds.iter().flat_map(|s| s.returns.iter().copied()).collect()
    }

    pub fn verdicts(&self) -> Vec<DetectorVerdict> {
        self.seeds.iter().flat_map(|s| s.verdicts.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub env: EnvKind,
    pub victim_mode: ActionMode,
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
    pub detector: Option<DecisionRuleParams>,
    pub budget_class: Option<f64>,
    /// Lowest mean return among the arms of the budget class, and its arm.
    pub worst_mean: f64,
    pub worst_label: Option<String>,
    pub unattacked: ArmResult,
    pub attacks: Vec<ArmResult>,
}

impl RunReport {
    pub fn arm(&self, label: &str) -> Option<&ArmResult> {
        self.attacks.iter().find(|a| a.label == label)
    }
}

/// In-memory experiment description.
pub struct Experiment<'a> {
    pub env: &'a Env,
    pub victim: &'a Policy,
    pub detector: Option<&'a Detector>,
    pub attacks: &'a [ResolvedAttack],
    pub episodes_per_seed: usize,
    pub seeds: &'a [u64],
    pub victim_mode: ActionMode,
    pub budget_class: Option<f64>,
}

/// Trajectories of one arm and seed, kept for persistence.
pub struct ArmLogs {
    pub label: String,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

fn run_arm(
    exp: &Experiment<'_>,
    attack: Option<&ResolvedAttack>,
    logs: &mut Vec<ArmLogs>,
    keep_logs: bool,
) -> ArmResult {
    let label = attack.map_or_else(|| "unattacked".to_string(), |a| a.label.clone());
    let mut seeds: Vec<u64> = exp.seeds.to_vec();
    seeds.sort_unstable();
    let mut results = Vec::new();
    let mut missing = Vec::new();
    for seed in seeds {
        let eval = evaluate_return(
            exp.env,
            exp.victim,
            attack.map(|a| &a.policy),
            exp.episodes_per_seed,
            seed,
            exp.victim_mode,
        );
        match eval {
            Ok(eval) => {
                let verdicts = match exp.detector {
                    Some(d) => d.verdicts(exp.env, &eval.trajectories),
                    None => vec![
                        DetectorVerdict {
                            attacked: false,
                            alarm_step: None,
                            max_statistic: 0.0,
                        };
                        eval.returns.len()
                    ],
                };
                let detected = verdicts.iter().filter(|v| v.attacked).count();
                let inconsistency = match mean_inconsistency(exp.env, &eval.trajectories, &mut seeded(seed)) {
                    Ok(v) => v,
                    Err(e) => {
                        missing.push(MissingSeed {
                            seed,
                            error: e.to_string(),
                        });
                        continue;
                    }
                };
                results.push(SeedResult {
                    seed,
                    mean: eval.mean,
                    std: eval.std,
                    detection_rate: detected as f64 / verdicts.len() as f64,
                    inconsistency,
                    returns: eval.returns,
                    verdicts,
                });
                if keep_logs {
                    logs.push(ArmLogs {
                        label: label.clone(),
                        seed,
                        trajectories: eval.trajectories,
                    });
                }
            }
            Err(e) => missing.push(MissingSeed {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let all: Vec<f64> = results.iter().flat_map(|r| r.returns.iter().copied()).collect();
    let (mean, std) = mean_std(&all);
    let seed_means: Vec<f64> = results.iter().map(|r| r.mean).collect();
    let (_, seed_std) = mean_std(&seed_means);
    let n_verdicts: usize = results.iter().map(|r| r.verdicts.len()).sum();
    let detected: usize = results.iter().map(|r| r.verdicts.iter().filter(|v| v.attacked).count()).sum();
    ArmResult {
        label,
        kind: attack.map(|a| a.kind),
        budget: attack.and_then(|a| a.budget),
        epsilon: attack.and_then(|a| a.epsilon),
        mean,
        std,
        seed_std,
        detection_rate: if n_verdicts == 0 { 0.0 } else { detected as f64 / n_verdicts as f64 },
        inconsistency: mean_std(&results.iter().map(|r| r.inconsistency).collect::<Vec<_>>()).0,
        adversary_score: 0.0,
        detection_adjusted_score: 0.0,
        seeds: results,
        missing_seeds: missing,
    }
}

/// Evaluates the unattacked victim and every attack arm on the same seeds,
/// then scores each arm against the worst arm of the budget class.
pub fn run_arms(exp: &Experiment<'_>, keep_logs: bool) -> Result<(RunReport, Vec<ArmLogs>)> {
    if exp.episodes_per_seed == 0 || exp.seeds.is_empty() {
        return Err(Error::Config("need at least one seed and one episode".into()));
    }
    let mut logs = Vec::new();
    let unattacked = run_arm(exp, None, &mut logs, keep_logs);
    if unattacked.seeds.is_empty() {
        return Err(Error::TrainingFailure(format!(
            "unattacked evaluation failed for every seed: {:?}",
            unattacked.missing_seeds
        )));
    }
    let mut attacks: Vec<ArmResult> = exp.attacks.iter().map(|a| run_arm(exp, Some(a), &mut logs, keep_logs)).collect();

    let budget_class = exp.budget_class.or_else(|| exp.attacks.iter().find_map(|a| a.budget));
    let u = unattacked.mean;
    let (worst_mean, worst_label) = attacks
        .iter()
        .filter(|a| !a.seeds.is_empty() && a.budget == budget_class)
        .map(|a| (a.mean, Some(a.label.clone())))
        .fold((u, None), |best, cand| if cand.0 < best.0 { cand } else { best });
    for arm in &mut attacks {
        arm.adversary_score = adversary_score(u, arm.mean, worst_mean);
        arm.detection_adjusted_score = detection_adjusted_score(&arm.returns(), &arm.verdicts(), u, worst_mean)?;
    }
    let mut seeds = exp.seeds.to_vec();
    seeds.sort_unstable();
    let report = RunReport {
        env: exp.env.kind(),
        victim_mode: exp.victim_mode,
        episodes_per_seed: exp.episodes_per_seed,
        seeds,
        detector: exp.detector.map(|d| d.params.clone()),
        budget_class,
        worst_mean,
        worst_label,
        unattacked,
        attacks,
    };
    Ok((report, logs))
}

pub const REPORT_FILE: &str = "report.json";

/// Loads checkpoints, runs the experiment and writes `report.json` plus one
/// JSONL trajectory log per arm and seed into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let base = Path::new("");
    let env = Env::from_kind(config.env);
    let victim = PolicyCheckpoint::load(&config.victim)?;
    if victim.env != config.env {
        return Err(Error::Config(format!("victim was trained on {}", victim.env)));
    }
    let detector = match &config.detector {
        Some(path) => {
            let ckpt = DetectorCheckpoint::load(path)?;
            if ckpt.env != config.env {
                return Err(Error::Config(format!("detector was calibrated on {}", ckpt.env)));
            }
            Some(ckpt.detector())
        }
        None => None,
    };
    let attacks = config
        .attacks
        .iter()
        .map(|a| a.resolve(config.env, base))
        .collect::<Result<Vec<_>>>()?;
    let exp = Experiment {
        env: &env,
        victim: &victim.policy,
        detector: detector.as_ref(),
        attacks: &attacks,
        episodes_per_seed: config.episodes_per_seed,
        seeds: &config.seeds,
        victim_mode: config.victim_mode,
        budget_class: config.budget_class,
    };
    let (report, logs) = run_arms(&exp, config.write_trajectories)?;
    std::fs::create_dir_all(&config.output_dir)?;
    for log in &logs {
        let header = LogHeader {
            env: env.spec(),
            seed: log.seed,
            attack: Some(log.label.clone()),
        };
        write_jsonl(&trajectory_path(&config.output_dir, &log.label, log.seed), &header, &log.trajectories)?;
    }
    std::fs::write(config.output_dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

pub fn trajectory_path(dir: &Path, label: &str, seed: u64) -> PathBuf {
    dir.join("trajectories").join(format!("{label}_seed{seed}.jsonl"))
}
