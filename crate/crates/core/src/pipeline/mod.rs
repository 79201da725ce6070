//! The gen → train → eval pipeline behind the command-line tool. Every
//! artifact records the hash of the configuration that produced it, and each
//! stage refuses inputs whose recorded hash disagrees with the current config.

mod config;

pub use config::RunConfig;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{build_index, DatasetError, DatasetIndex, SplitManifest, EPISODE_EXT};
use crate::envs::{scripted_expert, write_episode, EnvError, EpisodeIoError, TaskId};
use crate::evalkit::{
    run_detection_eval, run_policy_eval, EvalError, Metrics, MetricsReport, PolicyEvalConfig, PolicyReport, ReportMeta,
};
use crate::ksm::{
    load_encoder, load_querynet, save_encoder, save_querynet, train_joint, train_stage1, train_stage2,
    train_without_pretraining, EncoderModel, KsmError, QueryNetModel, TrainLog,
};
use crate::parallel::{map_ordered, with_workers};
use crate::policies::{append_jsonl, DetectorModels, PolicyError, PolicyKind};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or usage; exit code 1.
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    MissingPrerequisite(String),
    #[error("{artifact} was produced by config {found}, current config expects {expected}")]
    HashMismatch { artifact: PathBuf, expected: String, found: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Episode(#[from] EpisodeIoError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Ksm(#[from] KsmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl PipelineError {
    /// Process exit code: `1` for configuration errors, `2` for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Detection,
    Ablation,
    Rollout,
    Sweep,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Detection => "detection",
            EvalMode::Ablation => "ablation",
            EvalMode::Rollout => "rollout",
            EvalMode::Sweep => "sweep",
        }
    }
}

/// Output locations under the run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn manifest(&self) -> PathBuf {
        self.data().join("manifest.json")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn encoder(&self) -> PathBuf {
        self.checkpoints().join("encoder.kcn")
    }
    pub fn querynet(&self) -> PathBuf {
        self.checkpoints().join("querynet.kcn")
    }
    pub fn train_log(&self, stage: Stage) -> PathBuf {
        self.checkpoints().join(match stage {
            Stage::One => "stage1_log.csv",
            Stage::Two => "stage2_log.csv",
        })
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn report(&self, mode: EvalMode, ext: &str) -> PathBuf {
        self.reports().join(format!("{}.{ext}", mode.name()))
    }
    pub fn rollout_log(&self, mode: EvalMode) -> PathBuf {
        self.reports().join(format!("{}.jsonl", mode.name()))
    }
}

/// Sidecar written next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub config_hash: String,
    pub files: Vec<String>,
    pub split: SplitManifest,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io(path))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io(path))?;
    // Creation succeeding on an existing directory says nothing about writability.
    let probe = path.join(".write-probe");
    std::fs::write(&probe, b"").map_err(io(path))?;
    std::fs::remove_file(&probe).map_err(io(path))
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = std::fs::read(path).map_err(io(path))?;
    serde_json::from_slice(&raw).map_err(|e| PipelineError::Format { path: path.to_path_buf(), reason: e.to_string() })
}

fn check_hash(artifact: &Path, expected: String, found: &str) -> Result<()> {
    if expected != found {
        return Err(PipelineError::HashMismatch { artifact: artifact.to_path_buf(), expected, found: found.to_string() });
    }
    Ok(())
}

pub fn episode_file_name(task: TaskId, seed: u64) -> String {
    format!("{}-{seed:04}.{EPISODE_EXT}", task.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub counts: BTreeMap<TaskId, usize>,
    pub manifest: PathBuf,
}

/// Writes one expert demonstration per `(task, seed)` plus the split
/// manifest. Stale episode files from earlier runs are removed.
pub fn cmd_gen(cfg: &RunConfig) -> Result<GenSummary> {
    let layout = Layout::new(&cfg.out);
    let dir = layout.data();
    ensure_dir(&dir)?;
    let jobs: Vec<(TaskId, u64)> =
        TaskId::ALL.iter().flat_map(|&t| (0..cfg.episodes_per_task as u64).map(move |s| (t, s))).collect();
    let results = with_workers(cfg.workers, || {
        map_ordered(&jobs, |&(task, seed)| -> Result<(String, crate::envs::Episode)> {
            let ep = scripted_expert(task, seed)?;
            let name = episode_file_name(task, seed);
            write_episode(&ep, &dir.join(&name))?;
            Ok((name, ep))
        })
    });
    let mut named = Vec::with_capacity(results.len());
    for r in results {
        named.push(r?);
    }
    let files: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    for entry in std::fs::read_dir(&dir).map_err(io(&dir))? {
        let path = entry.map_err(io(&dir))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let body = name.strip_suffix(".json").unwrap_or(&name);
        if body.ends_with(&format!(".{EPISODE_EXT}")) && !files.iter().any(|f| f == body) {
            std::fs::remove_file(&path).map_err(io(&path))?;
        }
    }
    let index = DatasetIndex::from_named(named, cfg.split_seed, cfg.train_ratio)?;
    let manifest = DataManifest { config_hash: cfg.data_hash(), files, split: index.manifest() };
    write(&layout.manifest(), serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    let counts = TaskId::ALL.iter().map(|&t| (t, index.episodes.iter().filter(|e| e.task() == t).count())).collect();
    Ok(GenSummary { counts, manifest: layout.manifest() })
}

/// Loads the generated dataset after checking it matches `cfg`.
pub fn load_index(cfg: &RunConfig) -> Result<DatasetIndex> {
    let layout = Layout::new(&cfg.out);
    let mpath = layout.manifest();
    if !mpath.exists() {
        return Err(PipelineError::MissingPrerequisite(format!("dataset manifest required: {}", mpath.display())));
    }
    let manifest: DataManifest = read_json(&mpath)?;
    check_hash(&mpath, cfg.data_hash(), &manifest.config_hash)?;
    let index = build_index(&layout.data(), cfg.split_seed, cfg.train_ratio)?;
    if index.manifest() != manifest.split {
        return Err(PipelineError::Format { path: mpath, reason: "episode files disagree with the manifest".into() });
    }
    Ok(index)
}

fn save_meta(path: &Path, config_hash: String, checksum: String) -> Result<()> {
    let meta = CheckpointMeta { config_hash, checksum };
    write(&meta_path(path), serde_json::to_vec_pretty(&meta).expect("meta serializes"))
}

fn checked_meta(path: &Path, expected: String, what: &str) -> Result<CheckpointMeta> {
    if !path.exists() {
        return Err(PipelineError::MissingPrerequisite(format!("{what} checkpoint required: {}", path.display())));
    }
    let meta: CheckpointMeta = read_json(&meta_path(path))?;
    check_hash(path, expected, &meta.config_hash)?;
    Ok(meta)
}

pub fn load_stage1(cfg: &RunConfig) -> Result<EncoderModel> {
    let path = Layout::new(&cfg.out).encoder();
    checked_meta(&path, cfg.stage1_hash(), "stage-1")?;
    Ok(load_encoder(&path)?)
}

pub fn load_stage2(cfg: &RunConfig) -> Result<QueryNetModel> {
    let path = Layout::new(&cfg.out).querynet();
    checked_meta(&path, cfg.stage2_hash(), "stage-2")?;
    Ok(load_querynet(&path, cfg.stage2.k)?)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: TrainLog,
}

/// Trains one stage and writes its checkpoint, metadata and log CSV.
pub fn cmd_train(cfg: &RunConfig, stage: Stage) -> Result<TrainSummary> {
    let layout = Layout::new(&cfg.out);
    ensure_dir(&layout.checkpoints())?;
    let (checkpoint, log) = match stage {
        Stage::One => {
            let index = load_index(cfg)?;
            let (enc, log) = with_workers(cfg.workers, || train_stage1(&index, &cfg.stage1))?;
            let path = layout.encoder();
            save_encoder(&enc, &path)?;
            save_meta(&path, cfg.stage1_hash(), enc.checksum())?;
            (path, log)
        }
        Stage::Two => {
            let enc = load_stage1(cfg)?;
            let index = load_index(cfg)?;
            let (net, log) = with_workers(cfg.workers, || train_stage2(&enc, &index, &cfg.stage2))?;
            let path = layout.querynet();
            save_querynet(&net, &path)?;
            save_meta(&path, cfg.stage2_hash(), net.params.checksum())?;
            (path, log)
        }
    };
    write(&layout.train_log(stage), log.to_csv())?;
    Ok(TrainSummary { checkpoint, log })
}

fn meta(cfg: &RunConfig, split: &str, label: &str) -> ReportMeta {
    let layout = Layout::new(&cfg.out);
    let name = |p: PathBuf| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    ReportMeta {
        config_hash: cfg.config_hash(),
        checkpoints: vec![name(layout.encoder()), name(layout.querynet())],
        split: split.into(),
        label: label.into(),
    }
}

/// One row of the training-paradigm comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub paradigm: String,
    pub report: MetricsReport,
}

impl AblationRow {
    pub fn counting_recall(&self) -> Option<f64> {
        self.report.per_task.get(&TaskId::Counting).map(|m| m.metrics.recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, paradigm: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.paradigm == paradigm)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10}\n",
            "paradigm", "P", "R", "F1", "FPR", "FNR", "count-R"
        );
        for r in &self.rows {
            let m: &Metrics = &r.report.average;
            out += &format!(
                "{:<28} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>10.1}\n",
                r.paradigm,
                m.precision,
                m.recall,
                m.f1,
                m.fpr,
                m.fnr,
                r.counting_recall().unwrap_or(0.0)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("paradigm,{}\n", MetricsReport::CSV_HEADER);
        for r in &self.rows {
            for line in r.report.csv_rows() {
                out += &format!("{},{line}\n", r.paradigm);
            }
        }
        out
    }
}

/// Everything an evaluation produced, for callers that want more than files.
#[derive(Debug, Clone)]
pub enum EvalOutput {
    Detection(MetricsReport),
    Ablation(AblationReport),
    Policy(PolicyReport),
}

impl EvalOutput {
    pub fn to_table(&self) -> String {
        match self {
            EvalOutput::Detection(r) => r.to_table(),
            EvalOutput::Ablation(r) => r.to_table(),
            EvalOutput::Policy(r) => r.to_table(),
        }
    }
}

pub const PARADIGM_TWO_STAGE: &str = "two-stage";
pub const PARADIGM_JOINT: &str = "joint-end-to-end";
pub const PARADIGM_NO_PRETRAIN: &str = "no-metric-pretraining";

fn write_reports(layout: &Layout, mode: EvalMode, json: String, csv: String, table: &str) -> Result<()> {
    write(&layout.report(mode, "json"), json)?;
    write(&layout.report(mode, "csv"), csv)?;
    write(&layout.report(mode, "txt"), table)
}

pub fn cmd_eval(cfg: &RunConfig, mode: EvalMode) -> Result<EvalOutput> {
    let layout = Layout::new(&cfg.out);
    ensure_dir(&layout.reports())?;
    with_workers(cfg.workers, || match mode {
        EvalMode::Detection => {
            let (enc, net) = (load_stage1(cfg)?, load_stage2(cfg)?);
            let index = load_index(cfg)?;
            let mut report = run_detection_eval(&enc, &net, &index, &cfg.eval)?.report;
            report.meta = meta(cfg, "test", PARADIGM_TWO_STAGE);
            write_reports(&layout, mode, report.to_json(), report.to_csv(), &report.to_table())?;
            Ok(EvalOutput::Detection(report))
        }
        EvalMode::Ablation => {
            let (enc, net) = (load_stage1(cfg)?, load_stage2(cfg)?);
            let index = load_index(cfg)?;
            let (je, jn, _) = train_joint(&index, &cfg.stage2)?;
            let (ne, nn, _) = train_without_pretraining(&index, &cfg.stage2)?;
            let mut rows = Vec::new();
            for (paradigm, e, n) in
                [(PARADIGM_TWO_STAGE, &enc, &net), (PARADIGM_JOINT, &je, &jn), (PARADIGM_NO_PRETRAIN, &ne, &nn)]
            {
                let mut report = run_detection_eval(e, n, &index, &cfg.eval)?.report;
                report.meta = meta(cfg, "test", paradigm);
                rows.push(AblationRow { paradigm: paradigm.into(), report });
            }
            let report = AblationReport { config_hash: cfg.config_hash(), rows };
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_reports(&layout, mode, json, report.to_csv(), &report.to_table())?;
            Ok(EvalOutput::Ablation(report))
        }
        EvalMode::Rollout | EvalMode::Sweep => {
            let seeds = cfg.rollout_seeds();
            let pcfg = if mode == EvalMode::Rollout {
                PolicyEvalConfig { policies: cfg.policies.clone(), tasks: crate::evalkit::TABLE_TASKS.to_vec(), seeds }
            } else {
                let mut p = PolicyEvalConfig::sweep(seeds, true);
                p.policies = std::iter::once(PolicyKind::MARKOVIAN)
                    .chain(cfg.sweep_intervals.iter().map(|&interval| PolicyKind::Stride { n_h: cfg.sweep_n_h, interval }))
                    .chain([PolicyKind::Keyframes])
                    .collect();
                p
            };
            let needs = pcfg.policies.iter().any(PolicyKind::needs_detector);
            let models = if needs { Some((load_stage1(cfg)?, load_stage2(cfg)?)) } else { None };
            let det = models
                .as_ref()
                .map(|(encoder, querynet)| DetectorModels { encoder, querynet, config: cfg.detector });
            let (mut report, records) = run_policy_eval(&pcfg, det.as_ref())?;
            report.meta = meta(cfg, "rollout", mode.name());
            let log = layout.rollout_log(mode);
            if log.exists() {
                std::fs::remove_file(&log).map_err(io(&log))?;
            }
            append_jsonl(&log, &records)?;
            write_reports(&layout, mode, report.to_json(), report.to_csv(), &report.to_table())?;
            Ok(EvalOutput::Policy(report))
        }
    })
}
