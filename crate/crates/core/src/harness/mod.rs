mod config;
mod experiment;
mod pipeline;
mod report;
mod scoring;
mod study;

pub use config::{AttackSpec, ExperimentConfig, ResolvedAttack};
pub use experiment::{
    run_arms, run_experiment, trajectory_path, ArmLogs, ArmResult, Experiment, MissingSeed, RunReport, SeedResult,
    REPORT_FILE,
};
pub use pipeline::{budget_audit, BudgetAudit, run_pipeline, PipelineConfig, PipelineOutcome, StageTimes};
pub use report::{load_report, reports_to_csv, CSV_HEADER};
pub use scoring::{adversary_score, detection_adjusted_score};
pub use study::{
    default_classes, default_clip_frames, export_study_bundle, study_statistics, two_proportion_z_test,
    write_study_files, ClassStatistics, Clip, ClipCounts, IntroClip, Judgment, LabelFile, ResponseFile, StudyBundle,
    StudyClass, StudyReport, StudyResponse, TestVerdict, ZTest, BUNDLE_FILE, FRAME_RATE, LABELS_FILE, STUDY_ALPHA,
    STUDY_SCHEMA_VERSION,
};
