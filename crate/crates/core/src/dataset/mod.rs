//! Episode collections, the train/test split, and the two training samplers.

mod pairs;
mod triplet;

pub use pairs::{equidistant_frames, gen_pairs_for_split, gen_stage2_pairs, PairConfig, PairKind, PairStats, TrainingPair};
pub use triplet::{sample_triplet, FrameRef, NegativeKind, Triplet, TripletConfig, TripletSampler};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{read_episode, Episode, EpisodeIoError, Observation, TaskId};
use crate::nnet::named_rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Episode(#[from] EpisodeIoError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("duplicate episode ({task}, seed {seed}): {first} and {second}")]
    Duplicate { task: TaskId, seed: u64, first: String, second: String },
    #[error("{0}")]
    Precondition(String),
    #[error("frame {t} out of bounds for episode of length {len}")]
    OutOfBounds { t: usize, len: usize },
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct IndexedEpisode {
    /// File name, or `<task>-<seed>` for in-memory episodes.
    pub name: String,
    pub split: Split,
    pub episode: Episode,
}

impl IndexedEpisode {
    pub fn task(&self) -> TaskId {
        self.episode.task
    }

    pub fn keyframes(&self) -> Vec<usize> {
        self.episode.keyframe_frames()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub split_seed: u64,
    pub train_ratio: f64,
    /// Sorted by `(task, seed)`.
    pub episodes: Vec<IndexedEpisode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_seed: u64,
    pub train_ratio: f64,
    pub tasks: BTreeMap<TaskId, BTreeMap<String, Split>>,
    pub counts: BTreeMap<TaskId, BTreeMap<Split, usize>>,
}

impl DatasetIndex {
    /// Deterministic per-task split of in-memory episodes.
    pub fn from_named(named: Vec<(String, Episode)>, split_seed: u64, train_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_ratio) {
            return Err(DatasetError::Precondition(format!("train ratio {train_ratio} outside [0, 1]")));
        }
        let mut by_key: BTreeMap<(TaskId, u64), (String, Episode)> = BTreeMap::new();
        for (name, mut ep) in named {
            ep.states = Vec::new();
            let key = (ep.task, ep.seed);
            if let Some((first, _)) = by_key.get(&key) {
                return Err(DatasetError::Duplicate { task: key.0, seed: key.1, first: first.clone(), second: name });
            }
            by_key.insert(key, (name, ep));
        }
        let mut episodes = Vec::with_capacity(by_key.len());
        for task in TaskId::ALL {
            let mut group: Vec<(String, Episode)> =
                by_key.range((task, 0)..=(task, u64::MAX)).map(|(_, v)| v.clone()).collect();
            let mut order: Vec<usize> = (0..group.len()).collect();
            order.shuffle(&mut named_rng(split_seed, &format!("split/{}", task.name())));
            let n_train = (train_ratio * group.len() as f64).round() as usize;
            let train: BTreeSet<usize> = order[..n_train].iter().copied().collect();
            for (i, (name, episode)) in group.drain(..).enumerate() {
                let split = if train.contains(&i) { Split::Train } else { Split::Test };
                episodes.push(IndexedEpisode { name, split, episode });
            }
        }
        Ok(Self { split_seed, train_ratio, episodes })
    }

    pub fn from_episodes(episodes: Vec<Episode>, split_seed: u64, train_ratio: f64) -> Result<Self> {
        let named = episodes.into_iter().map(|e| (format!("{}-{:04}", e.task, e.seed), e)).collect();
        Self::from_named(named, split_seed, train_ratio)
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = (usize, &IndexedEpisode)> {
        self.episodes.iter().enumerate().filter(move |(_, e)| e.split == split)
    }

    pub fn count(&self, task: TaskId, split: Split) -> usize {
        self.episodes.iter().filter(|e| e.task() == task && e.split == split).count()
    }

    pub fn manifest(&self) -> SplitManifest {
        let mut tasks: BTreeMap<TaskId, BTreeMap<String, Split>> = BTreeMap::new();
        let mut counts: BTreeMap<TaskId, BTreeMap<Split, usize>> = BTreeMap::new();
        for e in &self.episodes {
            tasks.entry(e.task()).or_default().insert(e.name.clone(), e.split);
            *counts.entry(e.task()).or_default().entry(e.split).or_default() += 1;
        }
        SplitManifest { split_seed: self.split_seed, train_ratio: self.train_ratio, tasks, counts }
    }
}

/// Episode files under `root` are those with extension `kce`.
pub const EPISODE_EXT: &str = "kce";

/// Loads every episode file directly under `root` and splits them.
pub fn build_index(root: &Path, split_seed: u64, train_ratio: f64) -> Result<DatasetIndex> {
    let io = |source| DatasetError::Io { path: root.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|x| x == EPISODE_EXT));
    paths.sort();
    let mut named = Vec::with_capacity(paths.len());
    for p in paths {
        let ep = read_episode(&p)?;
        let name = p.file_name().expect("listed file").to_string_lossy().into_owned();
        named.push((name, ep));
    }
    DatasetIndex::from_named(named, split_seed, train_ratio)
}

/// Frames `t-k+1 ..= t`, repeating frame 0 for indices below zero.
pub fn load_window(episode: &Episode, t: usize, k: usize) -> Result<Vec<&Observation>> {
    if t >= episode.len() {
        return Err(DatasetError::OutOfBounds { t, len: episode.len() });
    }
    Ok(window_indices(t, k).into_iter().map(|i| &episode.observations[i]).collect())
}

pub fn window_indices(t: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| (t + j + 1).saturating_sub(k)).collect()
}
