use serde::{Deserialize, Serialize};

use crate::envs::Observation;

/// How the visible history is drawn from the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampling {
    /// `n_h` past frames spaced `interval` apart. `n_h = 0` is Markovian and
    /// `interval = 1` is a dense window.
    Stride { n_h: usize, interval: usize },
    /// Committed keyframes strictly before the current frame.
    Keyframes,
}

impl Sampling {
    pub const MARKOVIAN: Sampling = Sampling::Stride { n_h: 0, interval: 1 };
}

/// Everything a policy may see: past frames in time order and the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryView {
    pub sampling: Sampling,
    pub history: Vec<Observation>,
    pub current: Observation,
}

/// `{t - n_h·I, …, t - I}`, dropping negative frames.
pub fn stride_frames(t: usize, n_h: usize, interval: usize) -> Vec<usize> {
    (1..=n_h).rev().filter_map(|j| t.checked_sub(j * interval)).collect()
}

impl HistoryView {
    /// Stride view at the last frame of `observations`.
    ///
    /// # Panics
    /// If `observations` is empty or `interval` is zero with `n_h > 0`.
    pub fn stride(observations: &[Observation], n_h: usize, interval: usize) -> Self {
        assert!(n_h == 0 || interval > 0, "stride interval must be positive");
        let t = observations.len() - 1;
        let history = stride_frames(t, n_h, interval).into_iter().map(|f| observations[f].clone()).collect();
        Self { sampling: Sampling::Stride { n_h, interval }, history, current: observations[t].clone() }
    }

    /// Keyframe view. Frames at or after `current.t` are dropped, as are repeats.
    pub fn keyframes<'a>(keyframes: impl IntoIterator<Item = &'a Observation>, current: &Observation) -> Self {
        let mut history: Vec<Observation> = Vec::new();
        for o in keyframes {
            if o.t < current.t && history.last().is_none_or(|h| h.t < o.t) {
                history.push(o.clone());
            }
        }
        Self { sampling: Sampling::Keyframes, history, current: current.clone() }
    }

    pub fn frames(&self) -> impl Iterator<Item = &Observation> {
        self.history.iter().chain(std::iter::once(&self.current))
    }

    /// True when the view is known to hold every milestone reached so far:
    /// keyframe views, and any view at the first frame.
    pub fn covers_milestones(&self) -> bool {
        self.sampling == Sampling::Keyframes || self.current.t == 0
    }
}
