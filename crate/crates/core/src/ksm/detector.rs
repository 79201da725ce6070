use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::EncoderModel;
use super::querynet::QueryNetModel;
use super::{KsmError, Result};
use crate::envs::{Episode, Observation, TaskId, IMAGE_LEN};
use crate::nnet::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub tau: f64,
    pub window: usize,
    pub k: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { tau: 0.5, window: 5, k: 3 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(KsmError::Precondition(format!("threshold must lie in (0, 1), got {}", self.tau)));
        }
        if self.window == 0 || self.k == 0 {
            return Err(KsmError::Precondition("validation window and k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommittedKeyframe {
    pub frame: usize,
    pub phase: usize,
    pub score: f64,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provisional {
    pub frame: usize,
    pub score: f64,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorEvent {
    Provisional { frame: usize, phase: usize, score: f64 },
    Commit { frame: usize, phase: usize, score: f64 },
}

/// Streaming state for one rollout. `phase == committed.len() + 1` always.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub task: TaskId,
    pub phase: usize,
    pub provisional: Option<Provisional>,
    /// Frames at or below threshold since the last super-threshold frame.
    pub below: usize,
    pub committed: Vec<CommittedKeyframe>,
    /// Embeddings of the most recent `k` frames, oldest first.
    recent: VecDeque<Vec<f64>>,
    frames_seen: usize,
}

impl DetectorState {
    pub fn new(task: TaskId) -> Self {
        Self { task, phase: 1, provisional: None, below: 0, committed: Vec::new(), recent: VecDeque::new(), frames_seen: 0 }
    }

    /// Scoring stops once every phase of the task has been committed.
    pub fn is_idle(&self) -> bool {
        self.phase > self.task.phase_count()
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn committed_frames(&self) -> Vec<usize> {
        self.committed.iter().map(|c| c.frame).collect()
    }

    /// Applies the smoothing rules to one already-scored frame. `score` is
    /// ignored while idle.
    pub fn apply_score(&mut self, cfg: &DetectorConfig, obs: &Observation, frame: usize, score: f64) -> Vec<DetectorEvent> {
        let mut events = Vec::new();
        if self.is_idle() {
            return events;
        }
        if score > cfg.tau {
            self.provisional = Some(Provisional { frame, score, observation: obs.clone() });
            self.below = 0;
            events.push(DetectorEvent::Provisional { frame, phase: self.phase, score });
        } else {
            self.below += 1;
            if self.below >= cfg.window {
                if let Some(p) = self.provisional.take() {
                    events.push(DetectorEvent::Commit { frame: p.frame, phase: self.phase, score: p.score });
                    self.committed.push(CommittedKeyframe {
                        frame: p.frame,
                        phase: self.phase,
                        score: p.score,
                        observation: p.observation,
                    });
                    self.phase += 1;
                }
            }
        }
        events
    }

    fn push_embedding(&mut self, emb: Vec<f64>, k: usize) {
        if self.recent.is_empty() {
            for _ in 1..k {
                self.recent.push_back(emb.clone());
            }
        }
        self.recent.push_back(emb);
        while self.recent.len() > k {
            self.recent.pop_front();
        }
    }

    fn window_tensor(&self, dim: usize) -> Result<Tensor2D> {
        let data: Vec<f64> = self.recent.iter().flatten().copied().collect();
        Ok(Tensor2D::from_vec(self.recent.len(), dim, data)?)
    }
}

/// Encodes `obs`, scores the window against the current phase's query and
/// applies the smoothing rules. Returns the score (`None` while idle).
pub fn detector_feed(
    state: &mut DetectorState,
    cfg: &DetectorConfig,
    encoder: &EncoderModel,
    querynet: &QueryNetModel,
    obs: &Observation,
) -> Result<(Option<f64>, Vec<DetectorEvent>)> {
    if obs.pixels.len() != IMAGE_LEN {
        return Err(KsmError::Shape(format!("observation has {} pixels, expected {IMAGE_LEN}", obs.pixels.len())));
    }
    let frame = state.frames_seen;
    state.frames_seen += 1;
    if state.is_idle() {
        return Ok((None, Vec::new()));
    }
    state.push_embedding(encoder.encode_observation(obs)?, cfg.k);
    let window = state.window_tensor(encoder.dim)?;
    let score = querynet.score(&window, state.task, state.phase)?;
    let events = state.apply_score(cfg, obs, frame, score);
    Ok((Some(score), events))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub frame: usize,
    pub phase: usize,
    pub score: f64,
}

/// Offline detection over a recorded episode. Idle frames have no score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub episode: String,
    pub task: TaskId,
    pub commits: Vec<CommitRecord>,
    pub scores: Vec<Option<f64>>,
}

impl DetectionResult {
    pub fn commit_frames(&self) -> Vec<usize> {
        self.commits.iter().map(|c| c.frame).collect()
    }

    /// Frames whose score exceeded `tau`, before smoothing.
    pub fn raw_triggers(&self, tau: f64) -> Vec<usize> {
        self.scores.iter().enumerate().filter(|(_, s)| s.is_some_and(|s| s > tau)).map(|(i, _)| i).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| KsmError::Io { path: path.to_path_buf(), source })
    }
}

pub fn run_detection(
    encoder: &EncoderModel,
    querynet: &QueryNetModel,
    cfg: &DetectorConfig,
    name: &str,
    episode: &Episode,
) -> Result<DetectionResult> {
    cfg.validate()?;
    let mut state = DetectorState::new(episode.task);
    let mut scores = Vec::with_capacity(episode.len());
    for obs in &episode.observations {
        scores.push(detector_feed(&mut state, cfg, encoder, querynet, obs)?.0);
    }
    let commits =
        state.committed.iter().map(|c| CommitRecord { frame: c.frame, phase: c.phase, score: c.score }).collect();
    Ok(DetectionResult { episode: name.to_string(), task: episode.task, commits, scores })
}
