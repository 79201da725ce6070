use serde::{Deserialize, Serialize};

use super::matching::{cluster_triggers, match_detections, DetectionMatch};
use super::metrics::{compute_metrics, MetricsReport};
use super::{EvalError, Result};
use crate::dataset::{DatasetIndex, Split};
use crate::envs::TaskId;
use crate::ksm::{run_detection, DetectionResult, DetectorConfig, EncoderModel, QueryNetModel};
use crate::parallel::map_ordered;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalConfig {
    pub detector: DetectorConfig,
    pub cluster_gap: usize,
    pub tolerance: usize,
}

impl Default for DetectionEvalConfig {
    fn default() -> Self {
        Self { detector: DetectorConfig::default(), cluster_gap: 5, tolerance: 10 }
    }
}

/// Raw triggers of one detection run, clustered and matched against `gt`.
pub fn score_detection(result: &DetectionResult, gt: &[usize], cfg: &DetectionEvalConfig) -> Result<DetectionMatch> {
    let medians = cluster_triggers(&result.raw_triggers(cfg.detector.tau), cfg.cluster_gap)?;
    Ok(match_detections(&medians, gt, cfg.tolerance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub report: MetricsReport,
    /// Smoothed-commit matches, kept for diagnosis alongside the raw-trigger report.
    pub commit_report: MetricsReport,
    pub results: Vec<DetectionResult>,
}

/// Runs the detector over every test episode and scores its raw triggers.
pub fn run_detection_eval(
    encoder: &EncoderModel,
    querynet: &QueryNetModel,
    index: &DatasetIndex,
    cfg: &DetectionEvalConfig,
) -> Result<DetectionEval> {
    let test: Vec<_> = index.iter_split(Split::Test).map(|(_, e)| e).collect();
    if test.is_empty() {
        return Err(EvalError::Precondition("test split is empty".into()));
    }
    let runs = map_ordered(&test, |e| -> Result<(TaskId, DetectionResult, DetectionMatch, DetectionMatch)> {
        let res = run_detection(encoder, querynet, &cfg.detector, &e.name, &e.episode)?;
        let gt = e.keyframes();
        let raw = score_detection(&res, &gt, cfg)?;
        let committed = match_detections(&res.commit_frames(), &gt, cfg.tolerance);
        Ok((e.task(), res, raw, committed))
    });
    let (mut raw, mut committed, mut results) = (Vec::new(), Vec::new(), Vec::new());
    for r in runs {
        let (task, res, m, c) = r?;
        raw.push((task, m));
        committed.push((task, c));
        results.push(res);
    }
    Ok(DetectionEval { report: compute_metrics(&raw)?, commit_report: compute_metrics(&committed)?, results })
}
