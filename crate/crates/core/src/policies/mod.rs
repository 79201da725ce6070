//! Scripted policies whose only input is a history view of rendered frames
//! plus proprioception. Differences in success between them come from what
//! the view contains, not from policy capacity.

mod belief;
pub mod perception;
mod prompt;
mod rollout;
mod view;

pub use belief::{act, infer_belief, BeliefState};
pub use prompt::{render_prompt, PROMPT_TEMPLATE};
pub use rollout::{
    append_jsonl, read_jsonl, rollout, rollout_many, sampling_of, DetectorModels, PolicyKind, Rollout, RolloutRecord,
};
pub use view::{stride_frames, HistoryView, Sampling};

use std::path::PathBuf;

use thiserror::Error;

use crate::ksm::KsmError;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown policy `{0}` (expected markovian, stride-nh<N>-i<I>, keyframes or keyframes-oracle)")]
    UnknownPolicy(String),
    #[error("keyframe policy needs trained detector checkpoints")]
    MissingDetector,
    #[error(transparent)]
    Ksm(#[from] KsmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
}
