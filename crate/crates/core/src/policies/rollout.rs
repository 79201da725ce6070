use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::belief::{act, infer_belief};
use super::view::{HistoryView, Sampling};
use super::PolicyError;
use crate::envs::{check_success, run_episode, run_episode_with_oracle, Action, Episode, Observation, TaskId};
use crate::ksm::{detector_feed, DetectorConfig, DetectorState, EncoderModel, QueryNetModel};
use crate::nnet::named_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Fixed-stride history; `n_h = 0` is the Markovian policy.
    Stride { n_h: usize, interval: usize },
    /// Keyframes committed online by the detector.
    Keyframes,
    /// Ground-truth keyframes revealed as they are reached.
    OracleKeyframes,
}

impl PolicyKind {
    pub const MARKOVIAN: PolicyKind = PolicyKind::Stride { n_h: 0, interval: 1 };

    pub fn name(&self) -> String {
        match *self {
            PolicyKind::Stride { n_h: 0, .. } => "markovian".into(),
            PolicyKind::Stride { n_h, interval } => format!("stride-nh{n_h}-i{interval}"),
            PolicyKind::Keyframes => "keyframes".into(),
            PolicyKind::OracleKeyframes => "keyframes-oracle".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Self, PolicyError> {
        let bad = || PolicyError::UnknownPolicy(name.to_string());
        match name {
            "markovian" => Ok(Self::MARKOVIAN),
            "keyframes" => Ok(Self::Keyframes),
            "keyframes-oracle" => Ok(Self::OracleKeyframes),
            _ => {
                let rest = name.strip_prefix("stride-nh").ok_or_else(bad)?;
                let (n, i) = rest.split_once("-i").ok_or_else(bad)?;
                let (n_h, interval) = (n.parse().map_err(|_| bad())?, i.parse().map_err(|_| bad())?);
                if interval == 0 {
                    return Err(bad());
                }
                Ok(Self::Stride { n_h, interval })
            }
        }
    }

    pub fn needs_detector(&self) -> bool {
        *self == PolicyKind::Keyframes
    }
}

/// Trained detector handed to the keyframe policy.
#[derive(Debug, Clone, Copy)]
pub struct DetectorModels<'a> {
    pub encoder: &'a EncoderModel,
    pub querynet: &'a QueryNetModel,
    pub config: DetectorConfig,
}

/// One line of the rollout log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub policy: String,
    pub task: TaskId,
    pub seed: u64,
    pub success: bool,
    pub stages_completed: usize,
    pub stages_total: usize,
    pub n_keyframes_committed: usize,
    /// Frames stepped before termination.
    pub horizon_used: usize,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub record: RolloutRecord,
    pub episode: Episode,
    /// Keyframes available to the policy by the end of the episode.
    pub keyframes: Vec<usize>,
}

fn decide(view: &HistoryView, task: TaskId, rng: &mut impl rand::Rng) -> Vec<Action> {
    let belief = infer_belief(view, task);
    act(&belief, &view.current, task, rng)
}

/// Closed-loop episode under `kind`. The policy is queried whenever its
/// previous skill chunk is spent; between queries the detector, if any,
/// still sees every frame.
pub fn rollout(
    kind: PolicyKind,
    detector: Option<&DetectorModels<'_>>,
    task: TaskId,
    seed: u64,
) -> Result<Rollout, PolicyError> {
    let name = kind.name();
    let mut rng = named_rng(seed, &format!("policy/{name}/{}", task.name()));
    let (episode, keyframes) = match kind {
        PolicyKind::Stride { n_h, interval } => {
            if interval == 0 {
                return Err(PolicyError::UnknownPolicy(name));
            }
            let ep = run_episode(task, seed, |obs| decide(&HistoryView::stride(obs, n_h, interval), task, &mut rng));
            (ep, Vec::new())
        }
        PolicyKind::OracleKeyframes => {
            let mut last = Vec::new();
            let ep = run_episode_with_oracle(task, seed, |obs, keys| {
                last = keys.to_vec();
                let current = obs.last().expect("non-empty trace");
                let view = HistoryView::keyframes(keys.iter().map(|&f| &obs[f]), current);
                decide(&view, task, &mut rng)
            });
            (ep, last)
        }
        PolicyKind::Keyframes => {
            let models = detector.ok_or(PolicyError::MissingDetector)?;
            models.config.validate()?;
            let mut state = DetectorState::new(task);
            let mut failure = None;
            let mut feed = |state: &mut DetectorState, frames: &[Observation]| {
                for o in frames {
                    if failure.is_none() {
                        if let Err(e) = detector_feed(state, &models.config, models.encoder, models.querynet, o) {
                            failure = Some(e);
                        }
                    }
                }
            };
            let ep = run_episode(task, seed, |obs| {
                let seen = state.frames_seen();
                feed(&mut state, &obs[seen..]);
                let current = obs.last().expect("non-empty trace");
                let view = HistoryView::keyframes(state.committed.iter().map(|c| &c.observation), current);
                decide(&view, task, &mut rng)
            });
            let seen = state.frames_seen();
            feed(&mut state, &ep.observations[seen..]);
            if let Some(e) = failure {
                return Err(e.into());
            }
            (ep, state.committed_frames())
        }
    };
    let report = check_success(&episode);
    let record = RolloutRecord {
        policy: name,
        task,
        seed,
        success: report.success,
        stages_completed: report.stages_completed,
        stages_total: report.stages_total,
        n_keyframes_committed: keyframes.len(),
        horizon_used: episode.len() - 1,
    };
    Ok(Rollout { record, episode, keyframes })
}

/// Rollouts for every seed, in seed order, possibly in parallel.
pub fn rollout_many(
    kind: PolicyKind,
    detector: Option<&DetectorModels<'_>>,
    task: TaskId,
    seeds: &[u64],
) -> Result<Vec<RolloutRecord>, PolicyError> {
    crate::parallel::map_ordered(seeds, |&s| rollout(kind, detector, task, s).map(|r| r.record)).into_iter().collect()
}

impl RolloutRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

/// Appends one JSON object per line.
pub fn append_jsonl(path: &Path, records: &[RolloutRecord]) -> Result<(), PolicyError> {
    let io = |source| PolicyError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&r.to_json_line());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(io)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RolloutRecord>, PolicyError> {
    let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PolicyError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Sampling regime a policy kind sees.
pub fn sampling_of(kind: PolicyKind) -> Sampling {
    match kind {
        PolicyKind::Stride { n_h, interval } => Sampling::Stride { n_h, interval },
        PolicyKind::Keyframes | PolicyKind::OracleKeyframes => Sampling::Keyframes,
    }
}
