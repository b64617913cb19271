use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use illusory::agents::{evaluate_return, train_victim, ActionMode, PolicyCheckpoint, TrainConfig};
use illusory::attacks::{
    fig1_scheme, state_swap, train_epsilon_illusory, train_samdp_adversary, tune_dual_ascent, AdversaryConfig,
    AttackBudget, AttackCheckpoint, AttackKind, AttackPolicy, BudgetAnchor, ExactDualConfig, MnpAttack,
};
use illusory::detectors::{fit_detector, DetectorCheckpoint, DetectorConfig};
use illusory::envs::{Env, EnvKind};
use illusory::harness::{
    default_classes, export_study_bundle, load_report, reports_to_csv, run_experiment, study_statistics,
    run_pipeline, write_study_files, ClipCounts, ExperimentConfig, LabelFile, PipelineConfig, ResponseFile,
    RunReport, StudyClass, REPORT_FILE,
};
use illusory::rng::derive_seed;

#[derive(Parser)]
#[command(name = "illusory", version, about = "Observation-space attacks and their detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a victim policy and write its checkpoint.
    TrainVictim(TrainVictimArgs),
    /// Train (or build) an attack against a victim checkpoint.
    TrainAdversary(TrainAdversaryArgs),
    /// Fit the dynamics-model detector on unattacked victim episodes.
    TrainDetector(TrainDetectorArgs),
    /// Run an experiment described by a TOML file.
    Evaluate(EvaluateArgs),
    /// Collect run reports into one CSV table.
    Report(ReportArgs),
    /// Export a study bundle and its label file.
    ExportStudyBundle(ExportArgs),
    /// Summarise study responses against the label file.
    StudyStats(StudyStatsArgs),
    /// Train victim, detector and attacks from scratch, then evaluate every
    /// arm at one budget.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    env: EnvKind,
    /// Output directory for checkpoints and the report.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with pipeline settings; environment defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct TrainVictimArgs {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with training settings; environment defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct TrainAdversaryArgs {
    #[arg(long)]
    env: EnvKind,
    /// Victim checkpoint.
    #[arg(long)]
    victim: PathBuf,
    #[arg(long)]
    attack: AttackKind,
    /// Perturbation radius in normalised observation units.
    #[arg(long)]
    budget: Option<f64>,
    /// Detectability bound in nats.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with adversary settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Centre the budget ball on the predicted observation instead of the
    /// true state.
    #[arg(long)]
    anchor_prediction: bool,
    /// Deviation radius around the prediction, as a fraction of the budget.
    #[arg(long)]
    deviation_scale: Option<f64>,
    /// Initial dual variable.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Dual step size.
    #[arg(long)]
    dual_step: Option<f64>,
    /// Let the victim act greedily during training.
    #[arg(long)]
    greedy: bool,
}

#[derive(Args)]
struct TrainDetectorArgs {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    victim: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    train_episodes: usize,
    #[arg(long, default_value_t = 1000)]
    calibration_episodes: usize,
    #[arg(long, default_value_t = illusory::detectors::DEFAULT_TARGET_FPR)]
    fpr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    greedy: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Experiment TOML.
    config: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files or run directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// CSV destination; standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    victim: PathBuf,
    /// Attack checkpoints as `class=path`, e.g. `samdp=samdp.json`.
    #[arg(long = "attack", value_parser = parse_class_path)]
    attacks: Vec<(StudyClass, PathBuf)>,
    /// Budget for the MNP class.
    #[arg(long)]
    mnp_budget: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    per_class: usize,
    /// Frames per clip; environment default otherwise.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    greedy: bool,
}

#[derive(Args)]
struct StudyStatsArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_class_path(s: &str) -> std::result::Result<(StudyClass, PathBuf), String> {
    let (class, path) = s.split_once('=').ok_or("expected class=path")?;
    Ok((class.parse().map_err(|e| format!("{e}"))?, PathBuf::from(path)))
}

fn mode(greedy: bool) -> ActionMode {
    if greedy {
        ActionMode::Greedy
    } else {
        ActionMode::Stochastic
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_victim(path: &Path, env: EnvKind) -> Result<PolicyCheckpoint> {
    let ckpt = PolicyCheckpoint::load(path)?;
    if ckpt.env != env {
        bail!("{} holds a {} victim, expected {env}", path.display(), ckpt.env);
    }
    Ok(ckpt)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn train_victim_cmd(args: TrainVictimArgs) -> Result<()> {
    let env = Env::from_kind(args.env);
    let mut config = match &args.config {
        Some(p) => read_toml(p)?,
        None => TrainConfig::victim_default(args.env),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.total_steps = steps;
    }
    let trained = train_victim(&env, &config)?;
    info!("victim return {:.3} ± {:.3}", trained.eval_mean, trained.eval_std);
    trained.checkpoint(args.env).save(&args.out)?;
    println!("{}", serde_json::json!({ "mean": trained.eval_mean, "std": trained.eval_std }));
    Ok(())
}

fn train_adversary_cmd(args: TrainAdversaryArgs) -> Result<()> {
    let env = Env::from_kind(args.env);
    let victim = load_victim(&args.victim, args.env)?;
    let mut config: AdversaryConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => AdversaryConfig::for_env(args.env),
    };
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.train.total_steps = steps;
    }
    if args.anchor_prediction {
        config.anchor = BudgetAnchor::Prediction;
    }
    if args.greedy {
        config.victim_mode = ActionMode::Greedy;
    }
    if let Some(v) = args.deviation_scale {
        config.deviation_scale = v;
    }
    if let Some(v) = args.lambda0 {
        config.dual.lambda0 = v;
    }
    if let Some(v) = args.dual_step {
        config.dual.step_size = v;
    }
    let budget = || -> Result<AttackBudget> {
        let b = args.budget.context("this attack needs --budget")?;
        Ok(AttackBudget::new(b)?)
    };
    let ckpt = match (args.attack, &env) {
        (AttackKind::Identity, _) => AttackCheckpoint::new(args.env, AttackKind::Identity, AttackPolicy::Identity),
        (AttackKind::PerfectIllusory, _) => {
            AttackPolicy::PerfectIllusory.session(&env)?;
            AttackCheckpoint::new(args.env, AttackKind::PerfectIllusory, AttackPolicy::PerfectIllusory)
        }
        (AttackKind::Mnp, _) => {
            let attack = AttackPolicy::Mnp(MnpAttack::new(budget()?));
            attack.session(&env)?;
            AttackCheckpoint::new(args.env, AttackKind::Mnp, attack)
        }
        (AttackKind::Samdp, Env::OneStep(_)) => {
            AttackCheckpoint::new(args.env, AttackKind::Samdp, AttackPolicy::Tabular(state_swap()))
        }
        (AttackKind::Tabular, Env::OneStep(_)) => {
            AttackCheckpoint::new(args.env, AttackKind::Tabular, AttackPolicy::Tabular(fig1_scheme()))
        }
        (AttackKind::EpsilonIllusory, Env::OneStep(mdp)) => {
            let eps = args.epsilon.context("epsilon-illusory needs --epsilon")?;
            let out = tune_dual_ascent(mdp, &victim.policy, eps, &ExactDualConfig::default())?;
            info!("dual ascent: kl {:.4}, return {:.4}, λ {:.3}", out.kl, out.victim_return, out.lambda);
            let mut c = AttackCheckpoint::new(args.env, AttackKind::EpsilonIllusory, AttackPolicy::Tabular(out.attack));
            c.epsilon = Some(eps);
            c.lambda = Some(out.lambda);
            c.measured_kl = Some(out.kl);
            c
        }
        (AttackKind::Samdp, _) => {
            let trained = train_samdp_adversary(&env, &victim.policy, budget()?, &config)?;
            let mut c = AttackCheckpoint::new(args.env, AttackKind::Samdp, AttackPolicy::Learned(trained.attack));
            c.train_config = Some(config);
            c
        }
        (AttackKind::EpsilonIllusory, _) => {
            let eps = args.epsilon.context("epsilon-illusory needs --epsilon")?;
            let trained = train_epsilon_illusory(&env, &victim.policy, eps, budget()?, &config)?;
            info!("final λ {:?}, consistency {:.5}", trained.lambda, trained.measured_kl);
            let mut c =
                AttackCheckpoint::new(args.env, AttackKind::EpsilonIllusory, AttackPolicy::Learned(trained.attack));
            c.epsilon = Some(eps);
            c.lambda = trained.lambda;
            c.measured_kl = Some(trained.measured_kl);
            c.train_config = Some(config);
            c
        }
        (AttackKind::Tabular, _) => bail!("tabular attacks exist only for the one-step MDP"),
    };
    ckpt.save(&args.out)?;
    Ok(())
}

fn train_detector_cmd(args: TrainDetectorArgs) -> Result<()> {
    let env = Env::from_kind(args.env);
    let victim = load_victim(&args.victim, args.env)?;
    let m = mode(args.greedy);
    let train = evaluate_return(&env, &victim.policy, None, args.train_episodes, derive_seed(args.seed, 0), m)?;
    let calib =
        evaluate_return(&env, &victim.policy, None, args.calibration_episodes, derive_seed(args.seed, 1), m)?;
    let mut config = DetectorConfig {
        target_fpr: args.fpr,
        ..DetectorConfig::default()
    };
    config.scorer.seed = args.seed;
    let detector = fit_detector(&env, &train.trajectories, &calib.trajectories, &config)?;
    let ckpt = DetectorCheckpoint::new(&env, &detector, &train.trajectories, &calib.trajectories, &config)?;
    info!("calibration alarm rate {:.3}", ckpt.calibration_fpr);
    ckpt.save(&args.out)?;
    Ok(())
}

fn print_report(report: &RunReport) {
    for arm in std::iter::once(&report.unattacked).chain(&report.attacks) {
        println!(
            "{:<24} return {:>10.3} ± {:<8.3} detected {:.3}  inconsistency {:.2e}  score {:.3}  adjusted {:.3}",
            arm.label,
            arm.mean,
            arm.std,
            arm.detection_rate,
            arm.inconsistency,
            arm.adversary_score,
            arm.detection_adjusted_score
        );
    }
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    print_report(&run_experiment(&config)?);
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let reports = args.runs.iter().map(|p| load_report(p)).collect::<illusory::Result<Vec<_>>>()?;
    let csv = reports_to_csv(&reports);
    match args.out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn export_cmd(args: ExportArgs) -> Result<()> {
    let env = Env::from_kind(args.env);
    let victim = load_victim(&args.victim, args.env)?;
    let mut attacks = BTreeMap::new();
    for (class, path) in &args.attacks {
        let ckpt = AttackCheckpoint::load(path)?;
        if ckpt.env != args.env {
            bail!("{} is a {} attack", path.display(), ckpt.env);
        }
        attacks.insert(*class, ckpt.attack);
    }
    if let Some(b) = args.mnp_budget {
        attacks.insert(StudyClass::Mnp, AttackPolicy::Mnp(MnpAttack::new(AttackBudget::new(b)?)));
    }
    let mut counts = ClipCounts::for_env(args.env);
    counts.per_class = args.per_class;
    if let Some(f) = args.frames {
        counts.frames = f;
    }
    let (bundle, labels) = export_study_bundle(
        &env,
        &victim.policy,
        mode(args.greedy),
        &attacks,
        &default_classes(args.env),
        &counts,
        args.seed,
    )?;
    write_study_files(&args.out, &bundle, &labels)?;
    println!("{} clips written to {}", bundle.clips.len(), args.out.display());
    Ok(())
}

fn study_stats_cmd(args: StudyStatsArgs) -> Result<()> {
    let labels = LabelFile::load(&args.labels)?;
    let responses = ResponseFile::load(&args.responses)?;
    let report = study_statistics(&responses.responses, &labels)?;
    match args.out {
        Some(p) => write_json(&p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn pipeline_cmd(args: PipelineArgs) -> Result<()> {
    let mut config: PipelineConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => PipelineConfig::for_env(args.env),
    };
    config.env = args.env;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if args.epsilon.is_some() {
        config.epsilon = args.epsilon;
    }
    let outcome = run_pipeline(&config)?;
    let out = &args.out;
    outcome.victim.checkpoint(args.env).save(&out.join("victim.json"))?;
    outcome.detector_checkpoint.save(&out.join("detector.json"))?;
    for attack in &outcome.attacks {
        let mut ckpt = AttackCheckpoint::new(args.env, attack.kind, attack.policy.clone());
        ckpt.epsilon = attack.epsilon;
        ckpt.save(&out.join(format!("{}.json", attack.label)))?;
    }
    write_json(&out.join(REPORT_FILE), &outcome.report)?;
    print_report(&outcome.report);
    info!("ε = {:.3e}; stage times {:?}", outcome.epsilon, outcome.times);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainVictim(a) => train_victim_cmd(a),
        Command::TrainAdversary(a) => train_adversary_cmd(a),
        Command::TrainDetector(a) => train_detector_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::ExportStudyBundle(a) => export_cmd(a),
        Command::StudyStats(a) => study_stats_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    }
}
