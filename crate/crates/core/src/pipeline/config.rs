//! Declarative run configuration: `key = value` lines, `#` comments.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::evalkit::{DetectionEvalConfig, SWEEP_INTERVALS};
use crate::ksm::{DetectorConfig, Stage1Config, Stage2Config};
use crate::policies::PolicyKind;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Demonstrations use seeds `0..episodes_per_task` for every task.
    pub episodes_per_task: usize,
    pub split_seed: u64,
    pub train_ratio: f64,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub detector: DetectorConfig,
    pub eval: DetectionEvalConfig,
    /// Policies for `eval rollout`.
    pub policies: Vec<PolicyKind>,
    pub sweep_n_h: usize,
    pub sweep_intervals: Vec<usize>,
    pub n_seeds: usize,
    /// Rollout seeds are `seed_offset..seed_offset + n_seeds`, disjoint from demonstrations.
    pub seed_offset: u64,
    pub out: PathBuf,
    /// Thread count; `0` uses every core. Never affects outputs.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let detector = DetectorConfig::default();
        Self {
            episodes_per_task: 100,
            split_seed: 0,
            train_ratio: 0.8,
            stage1: Stage1Config::default(),
            stage2: Stage2Config { tau: detector.tau, ..Stage2Config::default() },
            detector,
            eval: DetectionEvalConfig { detector, ..DetectionEvalConfig::default() },
            policies: vec![PolicyKind::MARKOVIAN, PolicyKind::Keyframes, PolicyKind::OracleKeyframes],
            sweep_n_h: 3,
            sweep_intervals: SWEEP_INTERVALS.to_vec(),
            n_seeds: 50,
            seed_offset: 1000,
            out: PathBuf::from("runs/default"),
            workers: 1,
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, PipelineError> {
    v.parse().map_err(|_| PipelineError::Config(format!("`{key}`: cannot parse `{v}`")))
}

/// Keys grouped by the artifact they influence; each hash covers its group
/// and every upstream group.
const DATA_KEYS: &[&str] = &["episodes_per_task", "split.seed", "split.train_ratio"];
const STAGE1_KEYS: &[&str] = &[
    "stage1.batch",
    "stage1.epochs",
    "stage1.lr",
    "stage1.weight_decay",
    "stage1.margin",
    "stage1.delta_min",
    "stage1.delta_max",
    "stage1.seed",
];
const STAGE2_KEYS: &[&str] = &[
    "stage2.k",
    "stage2.batch",
    "stage2.epochs",
    "stage2.lr",
    "stage2.weight_decay",
    "stage2.pos_weight",
    "stage2.m",
    "stage2.post_negatives",
    "stage2.live_margin",
    "stage2.seed",
];
const EVAL_KEYS: &[&str] = &[
    "detector.tau",
    "detector.window",
    "eval.cluster_gap",
    "eval.tolerance",
    "rollout.policies",
    "rollout.n_h",
    "rollout.intervals",
    "rollout.n_seeds",
    "rollout.seed_offset",
];
const RUNTIME_KEYS: &[&str] = &["out", "workers"];

impl RunConfig {
    fn get(&self, key: &str) -> String {
        let (s1, s2) = (&self.stage1, &self.stage2);
        match key {
            "episodes_per_task" => self.episodes_per_task.to_string(),
            "split.seed" => self.split_seed.to_string(),
            "split.train_ratio" => self.train_ratio.to_string(),
            "stage1.batch" => s1.batch.to_string(),
            "stage1.epochs" => s1.epochs.to_string(),
            "stage1.lr" => s1.lr.to_string(),
            "stage1.weight_decay" => s1.weight_decay.to_string(),
            "stage1.margin" => s1.margin.to_string(),
            "stage1.delta_min" => s1.triplets.delta_min.to_string(),
            "stage1.delta_max" => s1.triplets.delta_max.to_string(),
            "stage1.seed" => s1.seed.to_string(),
            "stage2.k" => s2.k.to_string(),
            "stage2.batch" => s2.batch.to_string(),
            "stage2.epochs" => s2.epochs.to_string(),
            "stage2.lr" => s2.lr.to_string(),
            "stage2.weight_decay" => s2.weight_decay.to_string(),
            "stage2.pos_weight" => s2.pos_weight.to_string(),
            "stage2.m" => s2.pairs.m.to_string(),
            "stage2.post_negatives" => s2.pairs.post_negatives.to_string(),
            "stage2.live_margin" => s2.pairs.live_margin.to_string(),
            "stage2.seed" => s2.seed.to_string(),
            "detector.tau" => self.detector.tau.to_string(),
            "detector.window" => self.detector.window.to_string(),
            "eval.cluster_gap" => self.eval.cluster_gap.to_string(),
            "eval.tolerance" => self.eval.tolerance.to_string(),
            "rollout.policies" => list(&self.policies.iter().map(PolicyKind::name).collect::<Vec<_>>()),
            "rollout.n_h" => self.sweep_n_h.to_string(),
            "rollout.intervals" => list(&self.sweep_intervals),
            "rollout.n_seeds" => self.n_seeds.to_string(),
            "rollout.seed_offset" => self.seed_offset.to_string(),
            "out" => self.out.display().to_string(),
            "workers" => self.workers.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Sets one key. Derived fields (`k`, `tau` copies) are synced afterwards.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), PipelineError> {
        let v = v.trim();
        match key {
            "episodes_per_task" => self.episodes_per_task = parse(key, v)?,
            "split.seed" => self.split_seed = parse(key, v)?,
            "split.train_ratio" => self.train_ratio = parse(key, v)?,
            "stage1.batch" => self.stage1.batch = parse(key, v)?,
            "stage1.epochs" => self.stage1.epochs = parse(key, v)?,
            "stage1.lr" => self.stage1.lr = parse(key, v)?,
            "stage1.weight_decay" => self.stage1.weight_decay = parse(key, v)?,
            "stage1.margin" => self.stage1.margin = parse(key, v)?,
            "stage1.delta_min" => self.stage1.triplets.delta_min = parse(key, v)?,
            "stage1.delta_max" => self.stage1.triplets.delta_max = parse(key, v)?,
            "stage1.seed" => self.stage1.seed = parse(key, v)?,
            "stage2.k" => self.stage2.k = parse(key, v)?,
            "stage2.batch" => self.stage2.batch = parse(key, v)?,
            "stage2.epochs" => self.stage2.epochs = parse(key, v)?,
            "stage2.lr" => self.stage2.lr = parse(key, v)?,
            "stage2.weight_decay" => self.stage2.weight_decay = parse(key, v)?,
            "stage2.pos_weight" => self.stage2.pos_weight = parse(key, v)?,
            "stage2.m" => self.stage2.pairs.m = parse(key, v)?,
            "stage2.post_negatives" => self.stage2.pairs.post_negatives = parse(key, v)?,
            "stage2.live_margin" => self.stage2.pairs.live_margin = parse(key, v)?,
            "stage2.seed" => self.stage2.seed = parse(key, v)?,
            "detector.tau" => self.detector.tau = parse(key, v)?,
            "detector.window" => self.detector.window = parse(key, v)?,
            "eval.cluster_gap" => self.eval.cluster_gap = parse(key, v)?,
            "eval.tolerance" => self.eval.tolerance = parse(key, v)?,
            "rollout.policies" => {
                self.policies = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| PolicyKind::parse(s).map_err(|e| PipelineError::Config(format!("`{key}`: {e}"))))
                    .collect::<Result<_, _>>()?
            }
            "rollout.n_h" => self.sweep_n_h = parse(key, v)?,
            "rollout.intervals" => {
                self.sweep_intervals =
                    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect::<Result<_, _>>()?
            }
            "rollout.n_seeds" => self.n_seeds = parse(key, v)?,
            "rollout.seed_offset" => self.seed_offset = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "workers" => self.workers = parse(key, v)?,
            _ => return Err(PipelineError::Config(format!("unknown key `{key}`"))),
        }
        self.sync();
        Ok(())
    }

    fn sync(&mut self) {
        self.detector.k = self.stage2.k;
        self.stage2.tau = self.detector.tau;
        self.eval.detector = self.detector;
    }

    /// Parses `key = value` text over the defaults. Duplicate keys are an error.
    pub fn parse_str(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if seen.contains(&k) {
                return Err(PipelineError::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            seen.push(k);
            cfg.set(k, v).map_err(|e| PipelineError::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        let (s1, s2) = (&self.stage1, &self.stage2);
        if !(self.train_ratio > 0.0 && self.train_ratio <= 1.0) {
            return bad("split.train_ratio must lie in (0, 1]");
        }
        if s1.batch == 0 || s2.batch == 0 || s2.k == 0 || s2.pairs.m == 0 {
            return bad("batch sizes, stage2.k and stage2.m must be positive");
        }
        let positive = [s1.lr, s1.margin, s2.lr, s2.pos_weight];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || s1.weight_decay < 0.0 || s2.weight_decay < 0.0 {
            return bad("learning rates, margin and pos_weight must be positive; weight decay non-negative");
        }
        if s1.triplets.delta_min == 0 || s1.triplets.delta_min > s1.triplets.delta_max {
            return bad("stage1 neighbor bounds must satisfy 0 < delta_min <= delta_max");
        }
        self.detector.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.eval.cluster_gap == 0 {
            return bad("eval.cluster_gap must be positive");
        }
        if self.policies.is_empty() || self.sweep_intervals.is_empty() || self.n_seeds == 0 {
            return bad("rollout policies, intervals and n_seeds must be non-empty");
        }
        if self.sweep_intervals.contains(&0) {
            return bad("rollout intervals must be positive");
        }
        Ok(())
    }

    fn render(&self, groups: &[&[&str]]) -> String {
        groups.iter().flat_map(|g| g.iter()).map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    /// Every key, in canonical order. Parsing this text yields `self`.
    pub fn to_kv(&self) -> String {
        self.render(&[DATA_KEYS, STAGE1_KEYS, STAGE2_KEYS, EVAL_KEYS, RUNTIME_KEYS])
    }

    fn digest(&self, groups: &[&[&str]]) -> String {
        hex::encode(&Sha256::digest(self.render(groups).as_bytes())[..8])
    }

    /// Hash of everything that affects outputs (excludes `out` and `workers`).
    pub fn config_hash(&self) -> String {
        self.digest(&[DATA_KEYS, STAGE1_KEYS, STAGE2_KEYS, EVAL_KEYS])
    }

    pub fn data_hash(&self) -> String {
        self.digest(&[DATA_KEYS])
    }

    pub fn stage1_hash(&self) -> String {
        self.digest(&[DATA_KEYS, STAGE1_KEYS])
    }

    pub fn stage2_hash(&self) -> String {
        self.digest(&[DATA_KEYS, STAGE1_KEYS, STAGE2_KEYS])
    }

    pub fn rollout_seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed_offset + i).collect()
    }
}
