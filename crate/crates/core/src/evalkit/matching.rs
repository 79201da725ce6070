use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Merges sorted trigger frames whose consecutive gap is at most `gap` and
/// returns each cluster's lower median.
pub fn cluster_triggers(raw: &[usize], gap: usize) -> Result<Vec<usize>> {
    if let Some(w) = raw.windows(2).find(|w| w[0] > w[1]) {
        return Err(EvalError::Precondition(format!("trigger frames not sorted: {} before {}", w[0], w[1])));
    }
    let mut medians = Vec::new();
    let mut start = 0;
    for i in 1..=raw.len() {
        if i == raw.len() || raw[i] - raw[i - 1] > gap {
            if i > start {
                medians.push(raw[start + (i - start - 1) / 2]);
            }
            start = i;
        }
    }
    Ok(medians)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub medians: Vec<usize>,
    pub ground_truth: Vec<usize>,
    /// `(median, ground truth)` pairs, each side used at most once.
    pub pairs: Vec<(usize, usize)>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy in-order one-to-one matching within `tolerance` frames.
pub fn match_detections(medians: &[usize], ground_truth: &[usize], tolerance: usize) -> DetectionMatch {
    let mut m = medians.to_vec();
    let mut g = ground_truth.to_vec();
    m.sort_unstable();
    g.sort_unstable();
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::new();
    while i < m.len() && j < g.len() {
        if m[i].abs_diff(g[j]) <= tolerance {
            pairs.push((m[i], g[j]));
            i += 1;
            j += 1;
        } else if m[i] < g[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let tp = pairs.len();
    DetectionMatch { fp: m.len() - tp, fn_: g.len() - tp, medians: m, ground_truth: g, pairs, tp }
}
