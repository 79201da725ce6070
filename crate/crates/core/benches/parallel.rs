use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kfchain::envs::{scripted_expert, Episode, TaskId};
use kfchain::ksm::{run_detection, DetectorConfig, EncoderModel, QueryNetModel, EMBED_DIM};
use kfchain::parallel::{map_ordered, map_sequential, with_workers};

fn jobs() -> Vec<(TaskId, u64)> {
    TaskId::ALL.iter().flat_map(|&t| (0..8).map(move |s| (t, s))).collect()
}

fn expert_generation(c: &mut Criterion) {
    let jobs = jobs();
    let mut g = c.benchmark_group("expert_generation");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| map_sequential(&jobs, |&(t, s)| scripted_expert(t, s).unwrap())));
    g.bench_function("parallel", |b| {
        b.iter(|| with_workers(0, || map_ordered(&jobs, |&(t, s)| scripted_expert(t, s).unwrap())))
    });
    g.finish();
}

fn detection(c: &mut Criterion) {
    let episodes: Vec<Episode> = jobs().into_iter().map(|(t, s)| scripted_expert(t, s).unwrap()).collect();
    let enc = EncoderModel::new(0);
    let net = QueryNetModel::new(EMBED_DIM, 3, 0);
    let cfg = DetectorConfig::default();
    let detect = |e: &Episode| run_detection(&enc, &net, &cfg, "bench", e).unwrap();
    let mut g = c.benchmark_group("detection");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sequential", episodes.len()), |b| b.iter(|| map_sequential(&episodes, detect)));
    g.bench_function(BenchmarkId::new("parallel", episodes.len()), |b| {
        b.iter(|| with_workers(0, || map_ordered(&episodes, detect)))
    });
    g.finish();
}

criterion_group!(benches, expert_generation, detection);
criterion_main!(benches);
