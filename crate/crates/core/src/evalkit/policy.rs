use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, ReportMeta, Result};
use crate::envs::TaskId;
use crate::policies::{rollout_many, sampling_of, DetectorModels, PolicyKind, RolloutRecord, Sampling};

/// Column order of the success table.
pub const TABLE_TASKS: [TaskId; 4] = [TaskId::Spatial, TaskId::Temporal, TaskId::Identity, TaskId::Counting];

/// Default stride sweep: `N_h = 3` at each interval.
pub const SWEEP_INTERVALS: [usize; 5] = [5, 10, 20, 30, 40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvalConfig {
    pub policies: Vec<PolicyKind>,
    pub tasks: Vec<TaskId>,
    pub seeds: Vec<u64>,
}

impl PolicyEvalConfig {
    /// Markovian, the stride sweep and the keyframe policy over `seeds`.
    pub fn sweep(seeds: Vec<u64>, with_detector: bool) -> Self {
        let mut policies = vec![PolicyKind::MARKOVIAN];
        policies.extend(SWEEP_INTERVALS.iter().map(|&interval| PolicyKind::Stride { n_h: 3, interval }));
        policies.push(if with_detector { PolicyKind::Keyframes } else { PolicyKind::OracleKeyframes });
        Self { policies, tasks: TABLE_TASKS.to_vec(), seeds }
    }
}

/// Success and completion rates, both in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyCell {
    pub episodes: usize,
    pub success: f64,
    pub completion: f64,
}

impl PolicyCell {
    fn from_records<'a>(records: impl IntoIterator<Item = &'a RolloutRecord>) -> Option<Self> {
        let (mut n, mut ok, mut done) = (0usize, 0usize, 0.0);
        for r in records {
            n += 1;
            ok += usize::from(r.success);
            done += r.stages_completed as f64 / r.stages_total.max(1) as f64;
        }
        (n > 0).then(|| PolicyCell { episodes: n, success: 100.0 * ok as f64 / n as f64, completion: 100.0 * done / n as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: String,
    pub sampling: Sampling,
    pub per_task: BTreeMap<TaskId, PolicyCell>,
    /// Unweighted mean over the tasks present.
    pub average_success: f64,
    pub average_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub rows: Vec<PolicyRow>,
    pub meta: ReportMeta,
}

/// Groups records by policy (first-seen order) and task.
pub fn summarize_rollouts(records: &[RolloutRecord]) -> Result<PolicyReport> {
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.policy) {
            order.push(r.policy.clone());
        }
    }
    let mut rows = Vec::with_capacity(order.len());
    for name in order {
        let kind = PolicyKind::parse(&name).map_err(|e| EvalError::Precondition(e.to_string()))?;
        let per_task: BTreeMap<TaskId, PolicyCell> = TaskId::ALL
            .into_iter()
            .filter_map(|t| {
                PolicyCell::from_records(records.iter().filter(|r| r.policy == name && r.task == t)).map(|c| (t, c))
            })
            .collect();
        let n = per_task.len() as f64;
        rows.push(PolicyRow {
            policy: name,
            sampling: sampling_of(kind),
            average_success: per_task.values().map(|c| c.success).sum::<f64>() / n,
            average_completion: per_task.values().map(|c| c.completion).sum::<f64>() / n,
            per_task,
        });
    }
    Ok(PolicyReport { rows, meta: ReportMeta::default() })
}

/// Rolls out every policy on every task and seed. Records come back in
/// `(policy, task, seed)` order regardless of parallelism.
pub fn run_policy_eval(
    cfg: &PolicyEvalConfig,
    detector: Option<&DetectorModels<'_>>,
) -> Result<(PolicyReport, Vec<RolloutRecord>)> {
    if cfg.policies.is_empty() || cfg.tasks.is_empty() || cfg.seeds.is_empty() {
        return Err(EvalError::Precondition("policy evaluation needs policies, tasks and seeds".into()));
    }
    let mut records = Vec::with_capacity(cfg.policies.len() * cfg.tasks.len() * cfg.seeds.len());
    for &kind in &cfg.policies {
        for &task in &cfg.tasks {
            records.extend(rollout_many(kind, detector, task, &cfg.seeds)?);
        }
    }
    Ok((summarize_rollouts(&records)?, records))
}

fn sampling_columns(s: Sampling) -> (&'static str, String, String) {
    match s {
        Sampling::Stride { n_h: 0, .. } => ("none", "0".into(), "-".into()),
        Sampling::Stride { n_h, interval: 1 } => ("dense", n_h.to_string(), "1".into()),
        Sampling::Stride { n_h, interval } => ("stride", n_h.to_string(), interval.to_string()),
        Sampling::Keyframes => ("keyframes", "-".into(), "-".into()),
    }
}

impl PolicyReport {
    pub fn row(&self, policy: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub const CSV_HEADER: &'static str = "config,policy,sampling,n_h,interval,task,episodes,success,completion";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (s, n_h, i) = sampling_columns(r.sampling);
            let mut line = |task: &str, episodes: usize, success: f64, completion: f64| {
                out += &format!(
                    "{},{},{s},{n_h},{i},{task},{episodes},{success:.4},{completion:.4}\n",
                    self.meta.config_hash, r.policy
                );
            };
            for (t, c) in &r.per_task {
                line(t.name(), c.episodes, c.success, c.completion);
            }
            let total = r.per_task.values().map(|c| c.episodes).sum();
            line("average", total, r.average_success, r.average_completion);
        }
        out
    }

    /// Success table in the sweep layout; completion rates follow in brackets.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<18} {:<9} {:>3} {:>3}", "policy", "sampling", "N_h", "I");
        for t in TABLE_TASKS {
            out += &format!(" {:>14}", t.name());
        }
        out += &format!(" {:>14}\n", "average");
        for r in &self.rows {
            let (s, n_h, i) = sampling_columns(r.sampling);
            out += &format!("{:<18} {s:<9} {n_h:>3} {i:>3}", r.policy);
            for t in TABLE_TASKS {
                match r.per_task.get(&t) {
                    Some(c) => out += &format!(" {:>5.1} ({:>5.1})", c.success, c.completion),
                    None => out += &format!(" {:>14}", "-"),
                }
            }
            out += &format!(" {:>5.1} ({:>5.1})\n", r.average_success, r.average_completion);
        }
        out
    }
}
