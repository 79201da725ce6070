use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetIndex, Result, Split};
use crate::envs::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRef {
    /// Position in `DatasetIndex::episodes`.
    pub episode: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeKind {
    TemporalNeighbor,
    IntraTaskPhase,
    InterTask,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 3] =
        [NegativeKind::TemporalNeighbor, NegativeKind::IntraTaskPhase, NegativeKind::InterTask];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub task: TaskId,
    pub phase: usize,
    pub anchor: FrameRef,
    pub positive: FrameRef,
    pub negative: FrameRef,
    pub negative_task: TaskId,
    pub negative_phase: Option<usize>,
    pub kind: NegativeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub delta_min: usize,
    pub delta_max: usize,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { delta_min: 3, delta_max: 15 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Key {
    task: TaskId,
    phase: usize,
    at: FrameRef,
}

/// Stage I sampler over the training split. Anchors are always ground-truth
/// keyframes whose `(task, phase)` occurs in at least two training episodes.
#[derive(Debug, Clone)]
pub struct TripletSampler<'a> {
    index: &'a DatasetIndex,
    cfg: TripletConfig,
    keys: Vec<Key>,
    anchors: Vec<usize>,
    groups: BTreeMap<(TaskId, usize), Vec<usize>>,
    /// Draws whose first category was unsatisfiable and had to be replaced.
    pub warnings: usize,
}

impl<'a> TripletSampler<'a> {
    pub fn new(index: &'a DatasetIndex, cfg: TripletConfig) -> Result<Self> {
        if cfg.delta_min == 0 || cfg.delta_min > cfg.delta_max {
            return Err(DatasetError::Precondition(format!(
                "neighbor bounds must satisfy 0 < delta_min <= delta_max, got {}..={}",
                cfg.delta_min, cfg.delta_max
            )));
        }
        let mut keys = Vec::new();
        let mut groups: BTreeMap<(TaskId, usize), Vec<usize>> = BTreeMap::new();
        for (ei, e) in index.iter_split(Split::Train) {
            for k in &e.episode.keyframes {
                groups.entry((k.task, k.phase)).or_default().push(keys.len());
                keys.push(Key { task: k.task, phase: k.phase, at: FrameRef { episode: ei, frame: k.frame } });
            }
        }
        let anchors: Vec<usize> = groups
            .values()
            .filter(|g| {
                let first = keys[g[0]].at.episode;
                g.iter().any(|&i| keys[i].at.episode != first)
            })
            .flatten()
            .copied()
            .collect();
        if anchors.is_empty() {
            return Err(DatasetError::Precondition(
                "positive sampling needs at least two training episodes sharing a (task, phase)".into(),
            ));
        }
        Ok(Self { index, cfg, keys, anchors, groups, warnings: 0 })
    }

    /// Number of distinct anchor keyframes.
    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    fn neighbor(&self, key: &Key, rng: &mut impl Rng) -> Option<FrameRef> {
        let ep = &self.index.episodes[key.at.episode].episode;
        let t = key.at.frame;
        let anchor = &ep.observations[t].pixels;
        let lo = t.saturating_sub(self.cfg.delta_max);
        let hi = (t + self.cfg.delta_max).min(ep.len() - 1);
        let cands: Vec<usize> = (lo..=hi)
            .filter(|&f| f.abs_diff(t) >= self.cfg.delta_min && ep.observations[f].pixels != *anchor)
            .collect();
        pick(&cands, rng).map(|frame| FrameRef { episode: key.at.episode, frame })
    }

    fn keyed<F: Fn(&Key) -> bool>(&self, keep: F, rng: &mut impl Rng) -> Option<Key> {
        let cands: Vec<usize> = (0..self.keys.len()).filter(|&i| keep(&self.keys[i])).collect();
        pick(&cands, rng).map(|i| self.keys[i])
    }

    fn negative(&self, key: &Key, kind: NegativeKind, rng: &mut impl Rng) -> Option<(FrameRef, TaskId, Option<usize>)> {
        match kind {
            NegativeKind::TemporalNeighbor => self.neighbor(key, rng).map(|f| (f, key.task, None)),
            NegativeKind::IntraTaskPhase => self
                .keyed(|k| k.task == key.task && k.phase != key.phase, rng)
                .map(|k| (k.at, k.task, Some(k.phase))),
            NegativeKind::InterTask => {
                self.keyed(|k| k.task != key.task, rng).map(|k| (k.at, k.task, Some(k.phase)))
            }
        }
    }

    pub fn sample(&mut self, rng: &mut impl Rng) -> Result<Triplet> {
        let key = self.keys[self.anchors[rng.gen_range(0..self.anchors.len())]];
        let group = &self.groups[&(key.task, key.phase)];
        let others: Vec<usize> =
            group.iter().copied().filter(|&i| self.keys[i].at.episode != key.at.episode).collect();
        let positive = self.keys[others[rng.gen_range(0..others.len())]].at;

        let mut kinds = NegativeKind::ALL.to_vec();
        let mut first = true;
        loop {
            let kind = kinds.remove(rng.gen_range(0..kinds.len()));
            if let Some((negative, negative_task, negative_phase)) = self.negative(&key, kind, rng) {
                return Ok(Triplet {
                    task: key.task,
                    phase: key.phase,
                    anchor: key.at,
                    positive,
                    negative,
                    negative_task,
                    negative_phase,
                    kind,
                });
            }
            if first {
                self.warnings += 1;
                first = false;
            }
            if kinds.is_empty() {
                return Err(DatasetError::Precondition(format!(
                    "no negative of any category for {} phase {} anchor",
                    key.task, key.phase
                )));
            }
        }
    }
}

fn pick<T: Copy>(items: &[T], rng: &mut impl Rng) -> Option<T> {
    (!items.is_empty()).then(|| items[rng.gen_range(0..items.len())])
}

pub fn sample_triplet(sampler: &mut TripletSampler<'_>, rng: &mut impl Rng) -> Result<Triplet> {
    sampler.sample(rng)
}
