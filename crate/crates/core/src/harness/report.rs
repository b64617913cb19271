//! Plot-ready CSV summaries of run reports.

use std::fmt::Write as _;
use std::path::Path;

use super::experiment::{ArmResult, RunReport, REPORT_FILE};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "env,label,kind,budget,epsilon,mean,std,seed_std,detection_rate,inconsistency,adversary_score,detection_adjusted_score,missing_seeds";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn row(out: &mut String, report: &RunReport, arm: &ArmResult) {
    let kind = arm.kind.map(|k| k.to_string()).unwrap_or_default();
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        report.env,
        arm.label,
        kind,
        opt(arm.budget),
        opt(arm.epsilon),
        arm.mean,
        arm.std,
        arm.seed_std,
        arm.detection_rate,
        arm.inconsistency,
        arm.adversary_score,
        arm.detection_adjusted_score,
        arm.missing_seeds.len(),
    )
    .expect("writing to a string");
}

/// One row per arm (the unattacked arm first) of every report.
pub fn reports_to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        row(&mut out, r, &r.unattacked);
        for a in &r.attacks {
            row(&mut out, r, a);
        }
    }
    out
}

/// Reads a report file, or `report.json` inside a run directory.
pub fn load_report(path: &Path) -> Result<RunReport> {
    let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| Error::Config(format!("cannot read report {}: {e}", file.display())))?;
    Ok(serde_json::from_str(&text)?)
}
