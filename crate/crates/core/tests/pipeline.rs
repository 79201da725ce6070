use kfchain::pipeline::*;
use proptest::prelude::*;

#[test]
fn defaults_round_trip_through_text() {
    let cfg = RunConfig::default();
    assert_eq!(RunConfig::parse_str(&cfg.to_kv()).unwrap(), cfg);
    assert_eq!(cfg.episodes_per_task, 100);
    assert_eq!(cfg.rollout_seeds().len(), 50);
    assert_eq!(cfg.rollout_seeds()[0], 1000);
    assert_eq!(cfg.detector.k, cfg.stage2.k);
}

#[test]
fn parse_errors_name_the_line() {
    let err = |text: &str| RunConfig::parse_str(text).unwrap_err().to_string();
    assert!(err("stage1.lr = 0.1\nbogus = 3\n").contains("line 2"));
    assert!(err("detector.tau = 0.4\n\ndetector.tau = 0.6").contains("line 3: duplicate key"));
    assert!(err("no equals sign").contains("expected `key = value`"));
    assert!(err("stage2.epochs = many").contains("cannot parse"));
    assert!(err("rollout.policies = keyframes, telepathy").contains("rollout.policies"));
    for bad in ["detector.tau = 1.0", "split.train_ratio = 0", "stage1.lr = -1", "rollout.intervals = 5,0", "stage2.k = 0"] {
        let e = RunConfig::parse_str(bad).unwrap_err();
        assert_eq!(e.exit_code(), 1, "{bad}");
    }
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let cfg = RunConfig::parse_str("# header\n\n  detector.window = 7 # trailing\n").unwrap();
    assert_eq!(cfg.detector.window, 7);
    assert_eq!(cfg.eval.detector.window, 7);
}

#[test]
fn hashes_are_layered_by_artifact() {
    let base = RunConfig::default();
    let with = |k: &str, v: &str| {
        let mut c = base.clone();
        c.set(k, v).unwrap();
        c
    };
    let hashes = |c: &RunConfig| [c.data_hash(), c.stage1_hash(), c.stage2_hash(), c.config_hash()];
    let changed = |c: &RunConfig| hashes(c).iter().zip(hashes(&base)).map(|(a, b)| *a != b).collect::<Vec<_>>();
    assert_eq!(changed(&with("split.seed", "3")), [true, true, true, true]);
    assert_eq!(changed(&with("stage1.margin", "2")), [false, true, true, true]);
    assert_eq!(changed(&with("stage2.pos_weight", "2")), [false, false, true, true]);
    assert_eq!(changed(&with("detector.window", "6")), [false, false, false, true]);
    assert_eq!(changed(&with("workers", "8")), [false; 4]);
    assert_eq!(changed(&with("out", "elsewhere")), [false; 4]);
    assert_eq!(base.config_hash().len(), 16);
}

proptest! {
    #[test]
    fn any_valid_setting_round_trips(
        n in 0usize..500,
        ratio in 0.05f64..=1.0,
        lr in 1e-6f64..1.0,
        window in 1usize..20,
        tau in 0.01f64..0.99,
        intervals in prop::collection::vec(1usize..100, 1..6),
        workers in 0usize..16,
    ) {
        let mut cfg = RunConfig::default();
        cfg.set("episodes_per_task", &n.to_string()).unwrap();
        cfg.set("split.train_ratio", &ratio.to_string()).unwrap();
        cfg.set("stage2.lr", &lr.to_string()).unwrap();
        cfg.set("detector.window", &window.to_string()).unwrap();
        cfg.set("detector.tau", &tau.to_string()).unwrap();
        let list: Vec<String> = intervals.iter().map(|i| i.to_string()).collect();
        cfg.set("rollout.intervals", &list.join(",")).unwrap();
        cfg.set("workers", &workers.to_string()).unwrap();
        let back = RunConfig::parse_str(&cfg.to_kv()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.config_hash(), cfg.config_hash());
    }
}

fn small(root: &std::path::Path, workers: usize) -> RunConfig {
    let mut cfg = RunConfig::parse_str(
        "episodes_per_task = 4\nstage1.epochs = 1\nstage2.epochs = 1\nrollout.n_seeds = 2\nrollout.policies = markovian,keyframes-oracle\n",
    )
    .unwrap();
    cfg.out = root.to_path_buf();
    cfg.workers = workers;
    cfg
}

#[test]
fn gen_removes_stale_episodes_and_detects_data_drift() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), 1);
    cmd_gen(&cfg).unwrap();
    let data = Layout::new(dir.path()).data();
    assert!(data.join(episode_file_name(kfchain::envs::TaskId::Spatial, 3)).exists());
    cfg.episodes_per_task = 2;
    let summary = cmd_gen(&cfg).unwrap();
    assert!(summary.counts.values().all(|&n| n == 2));
    assert!(!data.join(episode_file_name(kfchain::envs::TaskId::Spatial, 3)).exists());
    assert!(!data.join(format!("{}.json", episode_file_name(kfchain::envs::TaskId::Spatial, 3))).exists());
    assert_eq!(load_index(&cfg).unwrap().episodes.len(), 8);

    cfg.split_seed = 9;
    assert!(matches!(load_index(&cfg), Err(PipelineError::HashMismatch { .. })));
    assert!(matches!(cmd_train(&cfg, Stage::One), Err(PipelineError::HashMismatch { .. })));
}

#[test]
fn worker_count_never_changes_artifacts() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, workers) in dirs.iter().zip([1, 4]) {
        let cfg = small(dir.path(), workers);
        cmd_gen(&cfg).unwrap();
        cmd_train(&cfg, Stage::One).unwrap();
        cmd_train(&cfg, Stage::Two).unwrap();
        cmd_eval(&cfg, EvalMode::Detection).unwrap();
        cmd_eval(&cfg, EvalMode::Rollout).unwrap();
    }
    let [a, b] = dirs.each_ref().map(|d| artifacts(&Layout::new(d.path())));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

fn artifacts(l: &Layout) -> Vec<std::path::PathBuf> {
    vec![
        l.manifest(),
        l.encoder(),
        l.querynet(),
        l.train_log(Stage::Two),
        l.report(EvalMode::Detection, "json"),
        l.report(EvalMode::Rollout, "csv"),
        l.rollout_log(EvalMode::Rollout),
    ]
}

#[test]
fn exit_codes() {
    assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
    assert_eq!(PipelineError::MissingPrerequisite("x".into()).exit_code(), 2);
}
