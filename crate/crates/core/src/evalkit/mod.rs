//! Detection diagnostics and the experiment runners built on them.

mod detection;
mod matching;
mod metrics;
mod policy;

pub use detection::{run_detection_eval, score_detection, DetectionEval, DetectionEvalConfig};
pub use matching::{cluster_triggers, match_detections, DetectionMatch};
pub use metrics::{compute_metrics, Counts, Metrics, MetricsReport, ReportMeta, TaskMetrics};
pub use policy::{
    run_policy_eval, summarize_rollouts, PolicyCell, PolicyEvalConfig, PolicyReport, PolicyRow, SWEEP_INTERVALS,
    TABLE_TASKS,
};

use thiserror::Error;

use crate::ksm::KsmError;
use crate::policies::PolicyError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Ksm(#[from] KsmError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
