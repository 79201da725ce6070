use std::collections::{BTreeMap, BTreeSet};

use kfchain::dataset::*;
use kfchain::envs::{scripted_expert, write_episode, Episode, TaskId};
use kfchain::nnet::named_rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn experts(tasks: &[TaskId], n: u64) -> Vec<Episode> {
    tasks.iter().flat_map(|&t| (0..n).map(move |s| scripted_expert(t, s).unwrap())).collect()
}

#[test]
fn split_is_eighty_twenty_and_deterministic() {
    let eps = experts(&TaskId::ALL, 100);
    let a = DatasetIndex::from_episodes(eps.clone(), 7, 0.8).unwrap();
    for t in TaskId::ALL {
        assert_eq!(a.count(t, Split::Train), 80);
        assert_eq!(a.count(t, Split::Test), 20);
    }
    let b = DatasetIndex::from_episodes(eps.clone(), 7, 0.8).unwrap();
    assert_eq!(a.manifest(), b.manifest());
    let c = DatasetIndex::from_episodes(eps, 8, 0.8).unwrap();
    assert_ne!(a.manifest().tasks, c.manifest().tasks);
    let names: BTreeSet<_> = a.episodes.iter().map(|e| e.name.clone()).collect();
    assert_eq!(names.len(), 400, "each episode in exactly one split");
}

#[test]
fn build_index_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = build_index(dir.path(), 0, 0.8).unwrap();
    assert!(empty.is_empty());

    for ep in experts(&TaskId::ALL, 5) {
        write_episode(&ep, &dir.path().join(format!("{}-{:04}.kce", ep.task, ep.seed))).unwrap();
    }
    let idx = build_index(dir.path(), 0, 0.8).unwrap();
    assert_eq!(idx.len(), 20);
    assert_eq!(idx.count(TaskId::Counting, Split::Train), 4);
    let json = serde_json::to_string(&idx.manifest()).unwrap();
    assert!(json.contains("\"counting-0003.kce\""));

    let dup = scripted_expert(TaskId::Spatial, 2).unwrap();
    write_episode(&dup, &dir.path().join("zz-copy.kce")).unwrap();
    let err = build_index(dir.path(), 0, 0.8).unwrap_err();
    assert!(matches!(err, DatasetError::Duplicate { seed: 2, .. }), "{err}");
    std::fs::remove_file(dir.path().join("zz-copy.kce")).unwrap();

    std::fs::write(dir.path().join("broken.kce"), b"KCEP\x01\0\0\0\x09").unwrap();
    std::fs::write(dir.path().join("broken.kce.json"), b"{}").unwrap();
    let err = build_index(dir.path(), 0, 0.8).unwrap_err().to_string();
    assert!(err.contains("broken.kce"), "{err}");
}

fn check_triplet(idx: &DatasetIndex, t: &Triplet, cfg: &TripletConfig) {
    let anchor_ep = &idx.episodes[t.anchor.episode];
    let pos_ep = &idx.episodes[t.positive.episode];
    assert_eq!(anchor_ep.split, Split::Train);
    assert!(anchor_ep.keyframes().contains(&t.anchor.frame));
    assert_eq!(anchor_ep.keyframes()[t.phase - 1], t.anchor.frame);
    assert_ne!(t.anchor.episode, t.positive.episode);
    assert_eq!(pos_ep.task(), t.task);
    assert_eq!(pos_ep.keyframes()[t.phase - 1], t.positive.frame);
    match t.kind {
        NegativeKind::TemporalNeighbor => {
            assert_eq!(t.negative.episode, t.anchor.episode);
            let d = t.negative.frame.abs_diff(t.anchor.frame);
            assert!(cfg.delta_min <= d && d <= cfg.delta_max);
        }
        NegativeKind::IntraTaskPhase => {
            assert_eq!(idx.episodes[t.negative.episode].task(), t.task);
            assert_ne!(t.negative_phase, Some(t.phase));
        }
        NegativeKind::InterTask => assert_ne!(idx.episodes[t.negative.episode].task(), t.task),
    }
}

#[test]
fn triplet_categories_are_balanced_and_valid() {
    let idx = DatasetIndex::from_episodes(
        experts(&[TaskId::Temporal, TaskId::Counting, TaskId::Identity], 10),
        0,
        0.8,
    )
    .unwrap();
    let cfg = TripletConfig::default();
    let mut sampler = TripletSampler::new(&idx, cfg).unwrap();
    let mut rng = named_rng(1, "triplets");
    let mut counts: BTreeMap<NegativeKind, usize> = BTreeMap::new();
    let n = 30_000;
    for i in 0..n {
        let t = sample_triplet(&mut sampler, &mut rng).unwrap();
        if i < 10_000 {
            check_triplet(&idx, &t, &cfg);
        }
        *counts.entry(t.kind).or_default() += 1;
    }
    assert_eq!(sampler.warnings, 0);
    for kind in NegativeKind::ALL {
        let f = counts[&kind] as f64 / n as f64;
        assert!((f - 1.0 / 3.0).abs() <= 0.02, "{kind:?}: {f}");
    }
}

#[test]
fn unsatisfiable_categories_are_replaced_with_a_warning() {
    let idx = DatasetIndex::from_episodes(experts(&[TaskId::Spatial], 6), 0, 1.0).unwrap();
    let cfg = TripletConfig::default();
    let mut sampler = TripletSampler::new(&idx, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let t = sampler.sample(&mut rng).unwrap();
        assert_eq!(t.kind, NegativeKind::TemporalNeighbor);
        check_triplet(&idx, &t, &cfg);
    }
    assert!(sampler.warnings > 0);
}

#[test]
fn single_episode_per_phase_cannot_supply_positives() {
    let idx = DatasetIndex::from_episodes(experts(&[TaskId::Temporal], 1), 0, 1.0).unwrap();
    let err = TripletSampler::new(&idx, TripletConfig::default()).unwrap_err().to_string();
    assert!(err.contains("at least two training episodes"), "{err}");
}

#[test]
fn equidistant_negatives_cover_each_subinterval() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let (f, short) = equidistant_frames(0, 50, 5, &[49, 50, 51], &mut rng);
        assert!(!short);
        assert_eq!(f.len(), 5);
        for (j, &x) in f.iter().enumerate() {
            assert!((10 * j..10 * (j + 1)).contains(&x));
        }
        assert!(!f.contains(&49));
    }
    let (f, short) = equidistant_frames(10, 13, 5, &[], &mut rng);
    assert_eq!((f, short), (vec![10, 11, 12], true));
    assert_eq!(equidistant_frames(0, 0, 5, &[], &mut rng), (vec![], true));
}

#[test]
fn stage2_pairs_counts_and_invariants() {
    let idx = DatasetIndex::from_episodes(experts(&TaskId::ALL, 10), 0, 1.0).unwrap();
    let plain = PairConfig { post_negatives: 0, drop_ambiguous: false, ..PairConfig::default() };
    let (pairs, stats) = gen_stage2_pairs(&idx, &plain, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    // The first phase's segment [0, 0) is empty: one short interval per episode.
    assert_eq!(stats.short_intervals, idx.len());
    for (ei, e) in idx.episodes.iter().enumerate().filter(|(_, e)| e.task() == TaskId::Temporal) {
        let mine: Vec<_> = pairs.iter().filter(|p| p.episode == ei).collect();
        let pos = mine.iter().filter(|p| p.label).count();
        let neg = mine.len() - pos;
        let m = plain.m;
        assert_eq!(pos, 2 + 3 * 3, "{}", e.name);
        assert_eq!(neg, (m + 1) * 4 - 1 - m);
    }

    let cfg = PairConfig::default();
    let (a, _) = gen_stage2_pairs(&idx, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let (b, _) = gen_stage2_pairs(&idx, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
    let mut covered = BTreeSet::new();
    for p in &a {
        let e = &idx.episodes[p.episode];
        let keys = e.keyframes();
        assert!(p.frame < e.episode.len());
        match p.kind {
            PairKind::Positive => {
                assert!(p.label);
                assert!(keys[p.phase - 1].abs_diff(p.frame) <= 1);
                covered.insert((p.episode, p.phase));
            }
            PairKind::InTrajectoryNegative => {
                let lo = if p.phase == 1 { 0 } else { keys[p.phase - 2] };
                assert!(lo <= p.frame && p.frame + 1 < keys[p.phase - 1]);
            }
            PairKind::PostKeyframeNegative => assert!(p.frame >= keys[p.phase - 1] + 2),
            PairKind::PhaseMismatchedNegative => {
                assert!(!p.label);
                assert_eq!(p.frame, keys[p.phase - 2]);
            }
        }
    }
    let expected: usize = idx.episodes.iter().map(|e| e.task().phase_count()).sum();
    assert_eq!(covered.len(), expected, "every (episode, phase) keeps a positive");
}

#[test]
fn ambiguous_counting_positives_are_dropped() {
    let idx = DatasetIndex::from_episodes(experts(&[TaskId::Counting], 4), 0, 1.0).unwrap();
    let (pairs, stats) =
        gen_stage2_pairs(&idx, &PairConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(stats.ambiguous_positives >= 4 * 4);
    for p in pairs.iter().filter(|p| p.label && p.phase > 1) {
        let k = idx.episodes[p.episode].keyframes()[p.phase - 1];
        assert!(p.frame >= k, "the frame before a lamp edge aliases its segment");
    }
}
