use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{window_indices, DatasetError, DatasetIndex, Result, Split};
use crate::envs::{Episode, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    Positive,
    InTrajectoryNegative,
    /// Frames after the milestone, before the next one.
    PostKeyframeNegative,
    PhaseMismatchedNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    /// Position in `DatasetIndex::episodes`.
    pub episode: usize,
    /// Last frame of the window.
    pub frame: usize,
    pub task: TaskId,
    /// 1-based phase whose query is scored.
    pub phase: usize,
    pub label: bool,
    pub kind: PairKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub k: usize,
    pub m: usize,
    pub post_negatives: usize,
    /// Post-keyframe negatives extend this many frames past the next
    /// keyframe: the span over which the current phase's query stays live
    /// while the detector validates its commit.
    pub live_margin: usize,
    /// Drop positive offsets whose window is pixel-identical to some negative
    /// window of the same phase; their label is not decidable from pixels.
    pub drop_ambiguous: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { k: 3, m: 5, post_negatives: 5, live_margin: 7, drop_ambiguous: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    /// Negative intervals with fewer frames than requested.
    pub short_intervals: usize,
    pub ambiguous_positives: usize,
}

/// One frame from each of `m` equal sub-intervals of `[lo, hi)`, skipping
/// `exclude`. Returns `true` alongside when fewer than `m` could be drawn.
pub fn equidistant_frames(lo: usize, hi: usize, m: usize, exclude: &[usize], rng: &mut impl Rng) -> (Vec<usize>, bool) {
    if m == 0 {
        return (Vec::new(), false);
    }
    let len = hi.saturating_sub(lo);
    if len < m {
        let all: Vec<usize> = (lo..hi).filter(|f| !exclude.contains(f)).collect();
        return (all, true);
    }
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let (a, b) = (lo + j * len / m, lo + (j + 1) * len / m);
        let cands: Vec<usize> = (a..b).filter(|f| !exclude.contains(f)).collect();
        if !cands.is_empty() {
            out.push(cands[rng.gen_range(0..cands.len())]);
        }
    }
    let short = out.len() < m;
    (out, short)
}

fn same_window(ep: &Episode, a: usize, b: usize, k: usize) -> bool {
    window_indices(a, k)
        .into_iter()
        .zip(window_indices(b, k))
        .all(|(i, j)| ep.observations[i].pixels == ep.observations[j].pixels)
}

/// Phase-guided balanced pairs for every `(episode, phase)` of the training
/// split, in index order.
pub fn gen_stage2_pairs(
    index: &DatasetIndex,
    cfg: &PairConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<TrainingPair>, PairStats)> {
    gen_pairs_for_split(index, Split::Train, cfg, rng)
}

/// [`gen_stage2_pairs`] over an arbitrary split (held-out validation uses the test split).
pub fn gen_pairs_for_split(
    index: &DatasetIndex,
    split: Split,
    cfg: &PairConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<TrainingPair>, PairStats)> {
    if cfg.m == 0 || cfg.k == 0 {
        return Err(DatasetError::Precondition("pair generation needs M >= 1 and k >= 1".into()));
    }
    let mut pairs = Vec::new();
    let mut stats = PairStats::default();
    for (ei, entry) in index.iter_split(split) {
        let ep = &entry.episode;
        let task = ep.task;
        let keys = ep.keyframe_frames();
        if keys.len() != task.phase_count() {
            return Err(DatasetError::Precondition(format!("{} lacks oracle keyframes", entry.name)));
        }
        let n = ep.len();
        for (pi, &k) in keys.iter().enumerate() {
            let phase = pi + 1;
            let prev = if pi == 0 { 0 } else { keys[pi - 1] };
            let next = keys.get(pi + 1).copied();
            let offsets: Vec<usize> = [k.checked_sub(1), Some(k), Some(k + 1)]
                .into_iter()
                .flatten()
                .filter(|&f| f < n && next.is_none_or(|nx| f < nx))
                .collect();
            let mut push = |frame, label, kind| pairs.push(TrainingPair { episode: ei, frame, task, phase, label, kind });

            let (negs, short) = equidistant_frames(prev, k, cfg.m, &offsets, rng);
            stats.short_intervals += usize::from(short);
            let post_hi = (next.unwrap_or(k) + cfg.live_margin).min(n);
            let (post, _) = equidistant_frames(k + 2, post_hi, cfg.post_negatives, &offsets, rng);

            for &f in &offsets {
                let ambiguous = cfg.drop_ambiguous
                    && (prev..post_hi.max(k + 2)).any(|g| !offsets.contains(&g) && g < n && same_window(ep, f, g, cfg.k));
                if ambiguous {
                    stats.ambiguous_positives += 1;
                } else {
                    push(f, true, PairKind::Positive);
                }
            }
            for f in negs {
                push(f, false, PairKind::InTrajectoryNegative);
            }
            for f in post {
                push(f, false, PairKind::PostKeyframeNegative);
            }
            if phase < task.phase_count() {
                pairs.push(TrainingPair {
                    episode: ei,
                    frame: k,
                    task,
                    phase: phase + 1,
                    label: false,
                    kind: PairKind::PhaseMismatchedNegative,
                });
            }
        }
    }
    Ok((pairs, stats))
}
