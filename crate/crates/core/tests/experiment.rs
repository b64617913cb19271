use std::path::Path;

use illusory::agents::{evaluate_return, ActionMode, Policy, PolicyCheckpoint, TrainConfig};
use illusory::attacks::{fig1_scheme, state_swap, AttackCheckpoint, AttackKind, AttackPolicy};
use illusory::detectors::{fit_detector, DetectorCheckpoint, DetectorConfig, ScorerConfig};
use illusory::envs::{read_jsonl, Env, EnvKind};
use illusory::harness::{
    load_report, reports_to_csv, run_arms, run_experiment, trajectory_path, Experiment, ExperimentConfig,
    ResolvedAttack, CSV_HEADER, REPORT_FILE,
};
use illusory::rng::seeded;

fn arm(label: &str, kind: AttackKind, policy: AttackPolicy) -> ResolvedAttack {
    ResolvedAttack {
        label: label.into(),
        kind,
        budget: None,
        policy,
        epsilon: None,
    }
}

fn one_step_arms() -> Vec<ResolvedAttack> {
    vec![
        arm("identity", AttackKind::Identity, AttackPolicy::Identity),
        arm("swap", AttackKind::Samdp, AttackPolicy::Tabular(state_swap())),
        arm("scheme", AttackKind::PerfectIllusory, AttackPolicy::Tabular(fig1_scheme())),
    ]
}

fn diagonal() -> Policy {
    Policy::tabular_from_probs(&[vec![1.0, 0.0], vec![0.0, 1.0]])
}

#[test]
fn one_step_scores_match_enumeration() {
    let env = Env::from_kind(EnvKind::OneStep);
    let victim = diagonal();
    let attacks = one_step_arms();
    let exp = Experiment {
        env: &env,
        victim: &victim,
        detector: None,
        attacks: &attacks,
        episodes_per_seed: 3000,
        seeds: &[3, 1, 2],
        victim_mode: ActionMode::Greedy,
        budget_class: None,
    };
    let (report, logs) = run_arms(&exp, false).unwrap();
    assert!(logs.is_empty());
    assert_eq!(report.seeds, vec![1, 2, 3]);
    assert_eq!(report.unattacked.returns().len(), 9000);
    assert_eq!(report.worst_label.as_deref(), Some("swap"));
    assert_eq!(report.worst_mean, 0.0);

    // Enumerated means: U = 1, swap 0, scheme 1/6. Returns are bounded by 2,
    // so 9000 episodes put the sample means within about 0.03.
    assert!((report.unattacked.mean - 1.0).abs() < 0.04);
    let identity = report.arm("identity").unwrap();
    assert_eq!(identity.returns(), report.unattacked.returns());
    assert_eq!(identity.adversary_score, 0.0);
    assert_eq!(report.arm("swap").unwrap().adversary_score, 1.0);
    let scheme = report.arm("scheme").unwrap();
    assert!((scheme.mean - 1.0 / 6.0).abs() < 0.03, "{}", scheme.mean);
    assert!((scheme.adversary_score - 5.0 / 6.0).abs() < 0.04, "{}", scheme.adversary_score);
    assert_eq!(scheme.detection_rate, 0.0);
    assert!((scheme.detection_adjusted_score - scheme.adversary_score).abs() < 1e-12);
}

#[test]
fn arms_need_seeds_and_episodes() {
    let env = Env::from_kind(EnvKind::OneStep);
    let victim = diagonal();
    let exp = Experiment {
        env: &env,
        victim: &victim,
        detector: None,
        attacks: &[],
        episodes_per_seed: 0,
        seeds: &[0],
        victim_mode: ActionMode::Greedy,
        budget_class: None,
    };
    assert!(run_arms(&exp, false).is_err());
}

fn write_one_step_run(dir: &Path) -> ExperimentConfig {
    let victim = PolicyCheckpoint::new(EnvKind::OneStep, diagonal(), TrainConfig::victim_default(EnvKind::OneStep), None);
    victim.save(&dir.join("victim.json")).unwrap();
    AttackCheckpoint::new(EnvKind::OneStep, AttackKind::Samdp, AttackPolicy::Tabular(state_swap()))
        .save(&dir.join("swap.json"))
        .unwrap();
    let toml = format!(
        r#"
env = "one-step"
victim = "{dir}/victim.json"
episodes_per_seed = 50
seeds = [0, 1]
output_dir = "{dir}/out"
victim_mode = "greedy"

[[attacks]]
kind = "identity"

[[attacks]]
kind = "samdp"
label = "swap"
checkpoint = "{dir}/swap.json"
"#,
        dir = dir.display()
    );
    ExperimentConfig::from_toml_str(&toml).unwrap()
}

#[test]
fn experiments_are_reproducible_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_one_step_run(dir.path());
    let first = run_experiment(&config).unwrap();
    let first_text = std::fs::read_to_string(config.output_dir.join(REPORT_FILE)).unwrap();
    let second = run_experiment(&config).unwrap();
    let second_text = std::fs::read_to_string(config.output_dir.join(REPORT_FILE)).unwrap();
    assert_eq!(first, second);
    assert_eq!(first_text, second_text);

    let (header, trajs) = read_jsonl(&trajectory_path(&config.output_dir, "swap", 1)).unwrap();
    assert_eq!(header.seed, 1);
    assert_eq!(header.attack.as_deref(), Some("swap"));
    assert_eq!(trajs.len(), 50);
    assert!(trajs.iter().all(|t| t.records.iter().all(|r| r.observation != r.state)));

    let loaded = load_report(&config.output_dir).unwrap();
    assert_eq!(loaded, first);
    let csv = reports_to_csv(&[loaded]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 3);
}

#[test]
fn mismatched_checkpoints_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_one_step_run(dir.path());
    AttackCheckpoint::new(EnvKind::Cartpole, AttackKind::Samdp, AttackPolicy::Tabular(state_swap()))
        .save(&dir.path().join("swap.json"))
        .unwrap();
    assert!(run_experiment(&config).is_err());
    config.attacks.pop();
    config.env = EnvKind::Cartpole;
    assert!(run_experiment(&config).is_err());
}

#[test]
fn detector_checkpoint_round_trip() {
    let env = Env::from_kind(EnvKind::Cartpole);
    let victim = Policy::categorical_mlp(4, &[8], 2, &mut seeded(2));
    let train = evaluate_return(&env, &victim, None, 200, 1, ActionMode::Stochastic).unwrap().trajectories;
    let calib = evaluate_return(&env, &victim, None, 200, 2, ActionMode::Stochastic).unwrap().trajectories;
    let config = DetectorConfig {
        scorer: ScorerConfig {
            hidden: vec![16],
            epochs: 5,
            ..ScorerConfig::default()
        },
        ..DetectorConfig::default()
    };
    let detector = fit_detector(&env, &train, &calib, &config).unwrap();
    let ckpt = DetectorCheckpoint::new(&env, &detector, &train, &calib, &config).unwrap();
    assert!(ckpt.calibration_fpr <= config.target_fpr + 1e-12);
    assert_eq!(ckpt.dataset_hash.len(), 64);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("detector.json");
    ckpt.save(&path).unwrap();
    let loaded = DetectorCheckpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    let fresh = evaluate_return(&env, &victim, None, 20, 3, ActionMode::Stochastic).unwrap().trajectories;
    assert_eq!(loaded.detector().verdicts(&env, &fresh), detector.verdicts(&env, &fresh));
}
