//! Human-study bundles: clip export with withheld labels, and the statistics
//! over collected judgments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::agents::{mean_std, rollout_episode, ActionMode, Policy};
use crate::attacks::AttackPolicy;
use crate::envs::{Env, EnvKind};
use crate::error::{Error, Result};
use crate::rng::{child, derive_seed};

pub const STUDY_SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_FILE: &str = "bundle.json";
pub const LABELS_FILE: &str = "labels.json";
pub const FRAME_RATE: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyClass {
    Unattacked,
    Mnp,
    Samdp,
    EpsilonIllusory,
}

impl StudyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyClass::Unattacked => "unattacked",
            StudyClass::Mnp => "mnp",
            StudyClass::Samdp => "samdp",
            StudyClass::EpsilonIllusory => "epsilon-illusory",
        }
    }
}

impl std::fmt::Display for StudyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StudyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unattacked" => Ok(StudyClass::Unattacked),
            "mnp" => Ok(StudyClass::Mnp),
            "samdp" => Ok(StudyClass::Samdp),
            "epsilon-illusory" => Ok(StudyClass::EpsilonIllusory),
            other => Err(Error::Config(format!("unknown study class '{other}'"))),
        }
    }
}

/// Classes shown per environment. MNP needs a discrete victim, so it is
/// only part of the CartPole study.
pub fn default_classes(env: EnvKind) -> Vec<StudyClass> {
    match env {
        EnvKind::Cartpole => vec![
            StudyClass::Unattacked,
            StudyClass::Mnp,
            StudyClass::Samdp,
            StudyClass::EpsilonIllusory,
        ],
        _ => vec![StudyClass::Unattacked, StudyClass::Samdp, StudyClass::EpsilonIllusory],
    }
}

pub fn default_clip_frames(env: EnvKind) -> usize {
    match env {
        EnvKind::Cartpole => 10,
        EnvKind::Pendulum => 100,
        EnvKind::OneStep => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipCounts {
    pub per_class: usize,
    pub frames: usize,
}

impl ClipCounts {
    pub fn for_env(env: EnvKind) -> Self {
        Self {
            per_class: 6,
            frames: default_clip_frames(env),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntroClip {
    pub env: EnvKind,
    pub frames: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub env: EnvKind,
    /// Observations as the victim saw them, in raw units.
    pub frames: Vec<Vec<f64>>,
}

/// Clip payload given to participants. Carries no label information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBundle {
    pub schema_version: u32,
    pub env: EnvKind,
    pub presentation_seed: u64,
    pub frame_rate: u32,
    pub intro: IntroClip,
    /// In presentation order.
    pub clips: Vec<Clip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub schema_version: u32,
    pub env: EnvKind,
    pub labels: BTreeMap<String, StudyClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgment {
    Unsuspicious,
    Suspicious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResponse {
    pub participant_id: String,
    pub clip_id: String,
    pub judgment: Judgment,
    pub response_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFile {
    pub schema_version: u32,
    pub responses: Vec<StudyResponse>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    let value: T = serde_json::from_str(&text)?;
    Ok(value)
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != STUDY_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{what} schema version {found}, expected {STUDY_SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

impl StudyBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let b: Self = read_json(path, "bundle")?;
        check_version(b.schema_version, "bundle")?;
        Ok(b)
    }
}

impl LabelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let l: Self = read_json(path, "label file")?;
        check_version(l.schema_version, "label file")?;
        Ok(l)
    }
}

impl ResponseFile {
    pub fn load(path: &Path) -> Result<Self> {
        let r: Self = read_json(path, "responses")?;
        check_version(r.schema_version, "responses")?;
        Ok(r)
    }
}

/// Writes the clip payload and the label file side by side.
pub fn write_study_files(dir: &Path, bundle: &StudyBundle, labels: &LabelFile) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(BUNDLE_FILE), serde_json::to_string(bundle)?)?;
    std::fs::write(dir.join(LABELS_FILE), serde_json::to_string_pretty(labels)?)?;
    Ok(())
}

const MAX_ATTEMPTS_PER_CLIP: usize = 50;

fn sample_frames(
    env: &Env,
    victim: &Policy,
    attack: Option<&AttackPolicy>,
    mode: ActionMode,
    frames: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut clips = Vec::with_capacity(count);
    let mut episode = 0;
    while clips.len() < count {
        if episode >= count * MAX_ATTEMPTS_PER_CLIP {
            return Err(Error::InsufficientData(format!(
                "only {} of {count} episodes lasted {frames} steps",
                clips.len()
            )));
        }
        let traj = rollout_episode(env, victim, attack, episode, derive_seed(seed, episode as u64), mode)?;
        episode += 1;
        if traj.len() >= frames {
            clips.push(traj.records[..frames].iter().map(|r| r.observation.0.clone()).collect());
        }
    }
    Ok(clips)
}

/// Samples `counts.per_class` clips of every class in `classes` and shuffles
/// them with the presentation seed. `attacks` supplies the policy for every
/// attacked class; unattacked clips need none.
pub fn export_study_bundle(
    env: &Env,
    victim: &Policy,
    victim_mode: ActionMode,
    attacks: &BTreeMap<StudyClass, AttackPolicy>,
    classes: &[StudyClass],
    counts: &ClipCounts,
    seed: u64,
) -> Result<(StudyBundle, LabelFile)> {
    if counts.per_class == 0 || counts.frames == 0 {
        return Err(Error::Config("clip count and length must be positive".into()));
    }
    let wanted: BTreeSet<StudyClass> = classes.iter().copied().collect();
    if wanted.len() != classes.len() {
        return Err(Error::Config("study classes must be distinct".into()));
    }
    let missing: Vec<String> = wanted
        .iter()
        .filter(|c| **c != StudyClass::Unattacked && !attacks.contains_key(c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnavailableClasses(missing));
    }
    for (class, attack) in attacks.iter().filter(|(c, _)| wanted.contains(c)) {
        attack
            .session(env)
            .map_err(|e| Error::Config(format!("{class} attack cannot run on {}: {e}", env.kind())))?;
    }

    let intro = sample_frames(env, victim, None, victim_mode, counts.frames, derive_seed(seed, 0), 1)?
        .pop()
        .expect("one intro clip");
    let mut id_rng = child(seed, 1);
    let mut ids = BTreeSet::new();
    let mut clips = Vec::new();
    let mut labels = BTreeMap::new();
    for (k, &class) in classes.iter().enumerate() {
        let frames = sample_frames(
            env,
            victim,
            attacks.get(&class),
            victim_mode,
            counts.frames,
            derive_seed(seed, 10 + k as u64),
            counts.per_class,
        )?;
        for f in frames {
            let id = loop {
                let mut bytes = [0u8; 8];
                id_rng.fill_bytes(&mut bytes);
                let id = hex::encode(bytes);
                if ids.insert(id.clone()) {
                    break id;
                }
            };
            labels.insert(id.clone(), class);
            clips.push(Clip {
                clip_id: id,
                env: env.kind(),
                frames: f,
            });
        }
    }
    let presentation_seed = derive_seed(seed, 2);
    clips.shuffle(&mut crate::rng::seeded(presentation_seed));
    let bundle = StudyBundle {
        schema_version: STUDY_SCHEMA_VERSION,
        env: env.kind(),
        presentation_seed,
        frame_rate: FRAME_RATE,
        intro: IntroClip {
            env: env.kind(),
            frames: intro,
        },
        clips,
    };
    let labels = LabelFile {
        schema_version: STUDY_SCHEMA_VERSION,
        env: env.kind(),
        labels,
    };
    Ok((bundle, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub class: StudyClass,
    pub responses: usize,
    pub marked_false: usize,
    /// Fraction of responses judging the clip suspicious.
    pub p_false: f64,
    /// Standard deviation of the per-participant fraction.
    pub participant_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestVerdict {
    Reject,
    CannotReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub class: StudyClass,
    pub against: StudyClass,
    pub z: f64,
    pub p_value: f64,
    pub verdict: TestVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub alpha: f64,
    pub classes: Vec<ClassStatistics>,
    pub tests: Vec<ZTest>,
    pub warnings: Vec<String>,
}

pub const STUDY_ALPHA: f64 = 0.05;

/// Pooled two-proportion two-sided z-test. Returns `(z, p)`; with no
/// variation at all the proportions are equal and `z = 0`.
pub fn two_proportion_z_test(x1: usize, n1: usize, x2: usize, n2: usize) -> (f64, f64) {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (x1 as f64 / n1f - x2 as f64 / n2f) / se;
    let normal = Normal::standard();
    (z, 2.0 * (1.0 - normal.cdf(z.abs())))
}

/// Per-class detection proportions and z-tests of every attacked class
/// against the unattacked one.
pub fn study_statistics(responses: &[StudyResponse], labels: &LabelFile) -> Result<StudyReport> {
    let unknown: BTreeSet<&str> = responses
        .iter()
        .filter(|r| !labels.labels.contains_key(&r.clip_id))
        .map(|r| r.clip_id.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::StudyMismatch(format!("responses reference unknown clips {unknown:?}")));
    }
    let label_classes: BTreeSet<StudyClass> = labels.labels.values().copied().collect();
    // class -> participant -> (marked false, total)
    let mut tally: BTreeMap<StudyClass, BTreeMap<&str, (usize, usize)>> = BTreeMap::new();
    for r in responses {
        let class = labels.labels[&r.clip_id];
        let entry = tally.entry(class).or_default().entry(r.participant_id.as_str()).or_default();
        entry.0 += usize::from(r.judgment == Judgment::Suspicious);
        entry.1 += 1;
    }
    let mut warnings = Vec::new();
    let mut classes = Vec::new();
    for class in &label_classes {
        let Some(per_participant) = tally.get(class) else {
            let msg = format!("class {class} has no responses and is excluded");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let marked: usize = per_participant.values().map(|v| v.0).sum();
        let total: usize = per_participant.values().map(|v| v.1).sum();
        let fractions: Vec<f64> = per_participant.values().map(|(m, n)| *m as f64 / *n as f64).collect();
        classes.push(ClassStatistics {
            class: *class,
            responses: total,
            marked_false: marked,
            p_false: marked as f64 / total as f64,
            participant_std: mean_std(&fractions).1,
        });
    }
    let mut tests = Vec::new();
    if let Some(base) = classes.iter().find(|c| c.class == StudyClass::Unattacked) {
        for c in classes.iter().filter(|c| c.class != StudyClass::Unattacked) {
            let (z, p_value) = two_proportion_z_test(c.marked_false, c.responses, base.marked_false, base.responses);
            tests.push(ZTest {
                class: c.class,
                against: StudyClass::Unattacked,
                z,
                p_value,
                verdict: if p_value < STUDY_ALPHA {
                    TestVerdict::Reject
                } else {
                    TestVerdict::CannotReject
                },
            });
        }
    } else {
        let msg = "no unattacked responses; z-tests skipped".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(StudyReport {
        alpha: STUDY_ALPHA,
        classes,
        tests,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::MnpAttack;
    use crate::attacks::AttackBudget;
    use crate::rng::seeded;

    fn labels(pairs: &[(&str, StudyClass)]) -> LabelFile {
        LabelFile {
            schema_version: STUDY_SCHEMA_VERSION,
            env: EnvKind::Pendulum,
            labels: pairs.iter().map(|(k, c)| (k.to_string(), *c)).collect(),
        }
    }

    fn response(p: &str, clip: &str, suspicious: bool) -> StudyResponse {
        StudyResponse {
            participant_id: p.into(),
            clip_id: clip.into(),
            judgment: if suspicious {
                Judgment::Suspicious
            } else {
                Judgment::Unsuspicious
            },
            response_time_ms: 1000,
        }
    }

    #[test]
    fn all_suspicious_gives_unit_proportions() {
        let l = labels(&[("a", StudyClass::Unattacked), ("b", StudyClass::Samdp)]);
        let rs: Vec<_> = ["p1", "p2"]
            .iter()
            .flat_map(|p| [response(p, "a", true), response(p, "b", true)])
            .collect();
        let rep = study_statistics(&rs, &l).unwrap();
        assert!(rep.classes.iter().all(|c| c.p_false == 1.0));
        assert_eq!(rep.tests[0].verdict, TestVerdict::CannotReject);
    }

    #[test]
    fn identical_classes_have_zero_z() {
        let l = labels(&[("a", StudyClass::Unattacked), ("b", StudyClass::Samdp)]);
        let rs = vec![
            response("p1", "a", true),
            response("p1", "b", true),
            response("p2", "a", false),
            response("p2", "b", false),
        ];
        let rep = study_statistics(&rs, &l).unwrap();
        assert_eq!(rep.tests[0].z, 0.0);
    }

    #[test]
    fn unknown_clip_refused() {
        let l = labels(&[("a", StudyClass::Unattacked)]);
        let err = study_statistics(&[response("p", "zz", true)], &l);
        assert!(matches!(err, Err(Error::StudyMismatch(_))));
    }

    #[test]
    fn empty_class_is_excluded_with_warning() {
        let l = labels(&[("a", StudyClass::Unattacked), ("b", StudyClass::Samdp)]);
        let rep = study_statistics(&[response("p", "a", true)], &l).unwrap();
        assert_eq!(rep.classes.len(), 1);
        assert_eq!(rep.warnings.len(), 1);
        assert!(rep.tests.is_empty());
    }

    #[test]
    fn missing_classes_are_listed() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let victim = Policy::gaussian_mlp(3, &[8], vec![-2.0], vec![2.0], 0.0, &mut seeded(0));
        let err = export_study_bundle(
            &env,
            &victim,
            ActionMode::Greedy,
            &BTreeMap::new(),
            &default_classes(EnvKind::Pendulum),
            &ClipCounts::for_env(EnvKind::Pendulum),
            0,
        );
        match err {
            Err(Error::UnavailableClasses(c)) => assert_eq!(c, vec!["samdp", "epsilon-illusory"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mnp_refused_on_continuous_actions() {
        let env = Env::from_kind(EnvKind::Pendulum);
        let victim = Policy::gaussian_mlp(3, &[8], vec![-2.0], vec![2.0], 0.0, &mut seeded(0));
        let attacks = BTreeMap::from([(
            StudyClass::Mnp,
            AttackPolicy::Mnp(MnpAttack::new(AttackBudget::new(0.1).unwrap())),
        )]);
        let res = export_study_bundle(
            &env,
            &victim,
            ActionMode::Greedy,
            &attacks,
            &[StudyClass::Unattacked, StudyClass::Mnp],
            &ClipCounts::for_env(EnvKind::Pendulum),
            0,
        );
        assert!(res.is_err());
    }
}
