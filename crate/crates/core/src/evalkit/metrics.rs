use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::DetectionMatch;
use super::{EvalError, Result};
use crate::envs::TaskId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, m: &DetectionMatch) {
        self.tp += m.tp;
        self.fp += m.fp;
        self.fn_ += m.fn_;
    }
}

/// Percentages in `[0, 100]`. A metric whose denominator is zero is reported
/// as `0` and named in `degenerate`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub degenerate: Vec<String>,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

impl Metrics {
    pub fn from_counts(c: Counts) -> Self {
        let mut degenerate = Vec::new();
        let mut or_flag = |v: Option<f64>, name: &str| {
            v.unwrap_or_else(|| {
                degenerate.push(name.to_string());
                0.0
            })
        };
        let predicted = c.tp + c.fp;
        let actual = c.tp + c.fn_;
        let precision = or_flag(pct(c.tp, predicted), "precision");
        let fpr = or_flag(pct(c.fp, predicted), "fpr");
        let recall = or_flag(pct(c.tp, actual), "recall");
        let fnr = or_flag(pct(c.fn_, actual), "fnr");
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate.push("f1".into());
            0.0
        };
        Self { precision, recall, f1, fpr, fnr, degenerate }
    }

    /// Unweighted mean of each metric; degenerate names are prefixed with the task.
    pub fn average<'a>(items: impl IntoIterator<Item = (TaskId, &'a Metrics)>) -> Self {
        let items: Vec<_> = items.into_iter().collect();
        let n = items.len().max(1) as f64;
        let mean = |f: fn(&Metrics) -> f64| items.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
        Self {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            fpr: mean(|m| m.fpr),
            fnr: mean(|m| m.fnr),
            degenerate: items.iter().flat_map(|(t, m)| m.degenerate.iter().map(move |d| format!("{t}:{d}"))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub episodes: usize,
    pub counts: Counts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub checkpoints: Vec<String>,
    pub split: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_task: BTreeMap<TaskId, TaskMetrics>,
    pub average: Metrics,
    pub meta: ReportMeta,
}

/// Pools counts per task, then averages the per-task metrics.
pub fn compute_metrics(matches: &[(TaskId, DetectionMatch)]) -> Result<MetricsReport> {
    if matches.is_empty() {
        return Err(EvalError::Precondition("no episodes to score".into()));
    }
    let mut pooled: BTreeMap<TaskId, (usize, Counts)> = BTreeMap::new();
    for (task, m) in matches {
        let e = pooled.entry(*task).or_default();
        e.0 += 1;
        e.1.add(m);
    }
    let per_task: BTreeMap<TaskId, TaskMetrics> = pooled
        .into_iter()
        .map(|(t, (episodes, counts))| (t, TaskMetrics { episodes, counts, metrics: Metrics::from_counts(counts) }))
        .collect();
    let average = Metrics::average(per_task.iter().map(|(t, m)| (*t, &m.metrics)));
    Ok(MetricsReport { per_task, average, meta: ReportMeta::default() })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub const CSV_HEADER: &'static str = "config,task,precision,recall,f1,fpr,fnr,tp,fp,fn,episodes,degenerate";

    /// One row per task plus an `average` row, labelled with `meta.label`.
    pub fn csv_rows(&self) -> Vec<String> {
        let row = |task: &str, m: &Metrics, c: Option<(Counts, usize)>| {
            let (c, n) = c.unwrap_or_default();
            let (tp, fp, fn_, n) = if task == "average" {
                (String::new(), String::new(), String::new(), String::new())
            } else {
                (c.tp.to_string(), c.fp.to_string(), c.fn_.to_string(), n.to_string())
            };
            format!(
                "{},{task},{:.2},{:.2},{:.2},{:.2},{:.2},{tp},{fp},{fn_},{n},{}",
                self.meta.label,
                m.precision,
                m.recall,
                m.f1,
                m.fpr,
                m.fnr,
                m.degenerate.join(";")
            )
        };
        let mut rows: Vec<String> =
            self.per_task.iter().map(|(t, m)| row(t.name(), &m.metrics, Some((m.counts, m.episodes)))).collect();
        rows.push(row("average", &self.average, None));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in self.csv_rows() {
            out += &r;
            out.push('\n');
        }
        out
    }

    /// Aligned text table with one row per task and a closing average row.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10} {:>7} {:>7} {:>7} {:>7} {:>7}\n", "task", "P", "R", "F1", "FPR", "FNR");
        let mut line = |name: &str, m: &Metrics| {
            out += &format!(
                "{name:<10} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1}\n",
                m.precision, m.recall, m.f1, m.fpr, m.fnr
            );
        };
        for (t, m) in &self.per_task {
            line(t.name(), &m.metrics);
        }
        line("average", &self.average);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts() {
        let m = Metrics::from_counts(Counts { tp: 39, fp: 1, fn_: 1 });
        assert!((m.precision - 97.5).abs() < 1e-12 && (m.recall - 97.5).abs() < 1e-12 && (m.f1 - 97.5).abs() < 1e-12);
        let m = Metrics::from_counts(Counts { tp: 0, fp: 0, fn_: 5 });
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.fnr, 100.0);
        assert!(m.degenerate.contains(&"precision".to_string()));
        assert!(compute_metrics(&[]).is_err());
    }
}
