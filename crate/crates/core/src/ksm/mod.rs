//! Keyframe selection: a metric-trained visual encoder, a task-conditioned
//! query network, and the streaming detector with greedy smoothing.

mod detector;
mod encoder;
mod querynet;
mod train;

pub use detector::{
    detector_feed, run_detection, CommitRecord, CommittedKeyframe, DetectionResult, DetectorConfig, DetectorEvent,
    DetectorState, Provisional,
};
pub use encoder::{image_batch, EncoderCache, EncoderModel, EMBED_DIM, ENCODER_HIDDEN};
pub use querynet::{positional_encoding, ForwardCache, QueryCache, QueryNetModel, HEAD_HIDDEN, MAX_PHASES};
pub use train::{
    embed_episodes, pair_accuracy, pair_batch_loss, train_joint, train_stage1, train_stage1_from, train_stage2,
    train_without_pretraining, triplet_batch_loss, window_rows, EpochLog, Stage1Config, Stage2Config, TrainLog,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::envs::{Observation, TaskId};
use crate::nnet::{load_checkpoint, save_checkpoint, NnError, Tensor2D};

#[derive(Debug, Error)]
pub enum KsmError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("phase {phase} outside 1..={max}")]
    PhaseOutOfRange { phase: usize, max: usize },
    #[error("{0}")]
    Precondition(String),
    #[error("non-finite loss in stage {stage}, epoch {epoch}, batch {batch}: {}", descriptors.join("; "))]
    NonFiniteLoss { stage: u8, epoch: usize, batch: usize, descriptors: Vec<String> },
    #[error("encoder changed during stage II (checksum {before} -> {after})")]
    FreezeViolation { before: String, after: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = KsmError> = std::result::Result<T, E>;

fn with_path(path: &Path, e: NnError) -> KsmError {
    KsmError::Checkpoint(format!("{}: {e}", path.display()))
}

pub fn save_encoder(model: &EncoderModel, path: &Path) -> Result<()> {
    save_checkpoint(&model.params, path).map_err(|e| with_path(path, e))
}

pub fn load_encoder(path: &Path) -> Result<EncoderModel> {
    EncoderModel::from_params(load_checkpoint(path).map_err(|e| with_path(path, e))?)
}

pub fn save_querynet(model: &QueryNetModel, path: &Path) -> Result<()> {
    save_checkpoint(&model.params, path).map_err(|e| with_path(path, e))
}

pub fn load_querynet(path: &Path, k: usize) -> Result<QueryNetModel> {
    QueryNetModel::from_params(load_checkpoint(path).map_err(|e| with_path(path, e))?, k)
}

pub fn make_query(model: &QueryNetModel, task: TaskId, phase: usize) -> Result<Tensor2D> {
    Ok(model.make_query(task, phase)?.0)
}

/// Score of a window of `k` observations (oldest first).
pub fn score_window(
    encoder: &EncoderModel,
    querynet: &QueryNetModel,
    window: &[&Observation],
    task: TaskId,
    phase: usize,
) -> Result<f64> {
    if window.len() != querynet.k {
        return Err(KsmError::Shape(format!("window has {} frames, expected {}", window.len(), querynet.k)));
    }
    let emb = encoder.forward(&image_batch(window)?)?;
    querynet.score(emb.output(), task, phase)
}
