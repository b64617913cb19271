use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, EnvSpec, EnvState};
use crate::error::{Error, Result};

/// One logged step. `state` is the true (core) state the step started from,
/// `observation` what the victim was shown. Both are in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: usize,
    pub state: EnvState,
    pub observation: EnvState,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: usize,
    pub seed: u64,
    pub records: Vec<TransitionRecord>,
}

impl Trajectory {
    pub fn undiscounted_return(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = &EnvState> {
        self.records.iter().map(|r| &r.observation)
    }
}

/// First line of every trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub env: EnvSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Transition {
        episode: usize,
        seed: u64,
        #[serde(flatten)]
        record: TransitionRecord,
    },
}

pub fn write_jsonl(path: &Path, header: &LogHeader, trajectories: &[Trajectory]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &LogLine::Header(header.clone()))?;
    w.write_all(b"\n")?;
    for traj in trajectories {
        for record in &traj.records {
            let line = LogLine::Transition {
                episode: traj.episode,
                seed: traj.seed,
                record: record.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<(LogHeader, Vec<Trajectory>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(&line)? {
            LogLine::Header(h) => header = Some(h),
            LogLine::Transition { episode, seed, record } => {
                match trajectories.last_mut() {
                    Some(last) if last.episode == episode => last.records.push(record),
                    _ => trajectories.push(Trajectory {
                        episode,
                        seed,
                        records: vec![record],
                    }),
                }
            }
        }
    }
    let header = header.ok_or_else(|| Error::InvalidState("trajectory log has no header line".into()))?;
    Ok((header, trajectories))
}
