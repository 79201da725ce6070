use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::{image_batch, EncoderModel};
use super::querynet::QueryNetModel;
use super::{KsmError, Result};
use crate::dataset::{
    gen_pairs_for_split, window_indices, DatasetIndex, PairConfig, Split, TrainingPair, Triplet, TripletConfig,
    TripletSampler,
};
use crate::envs::Observation;
use crate::nnet::{adamw_step, bce_with_logits, named_rng, sigmoid, triplet_loss, AdamWConfig, OptimState, ParamSet, Tensor2D};
use crate::parallel::map_ordered;

/// Work items per parallel task. Fixed so the gradient summation order does
/// not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub margin: f64,
    pub triplets: TripletConfig,
    /// Batches per epoch; `None` means one triplet per anchor keyframe.
    pub batches_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            batch: 64,
            epochs: 30,
            lr: 1e-4,
            weight_decay: 1e-3,
            margin: 1.0,
            triplets: TripletConfig::default(),
            batches_per_epoch: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub k: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub pos_weight: f64,
    pub tau: f64,
    pub pairs: PairConfig,
    pub seed: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            k: 3,
            batch: 32,
            epochs: 50,
            lr: 1e-4,
            weight_decay: 0.05,
            pos_weight: 5.0,
            tau: 0.5,
            pairs: PairConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Thresholded accuracy on training pairs (Stage II only).
    pub train_accuracy: Option<f64>,
    /// Thresholded accuracy on held-out pairs (Stage II only, when the test split is non-empty).
    pub heldout_accuracy: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Triplet draws that fell back to another negative category.
    pub sampler_warnings: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,train_accuracy,heldout_accuracy,samples\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for e in &self.epochs {
            out += &format!(
                "{},{:.8},{},{},{}\n",
                e.epoch,
                e.mean_loss,
                opt(e.train_accuracy),
                opt(e.heldout_accuracy),
                e.samples
            );
        }
        out
    }
}

fn describe(t: &Triplet, index: &DatasetIndex) -> String {
    let name = |e: usize| index.episodes[e].name.as_str();
    format!(
        "{} phase {} anchor {}@{} positive {}@{} negative {}@{} ({:?})",
        t.task,
        t.phase,
        name(t.anchor.episode),
        t.anchor.frame,
        name(t.positive.episode),
        t.positive.frame,
        name(t.negative.episode),
        t.negative.frame,
        t.kind
    )
}

/// Summed triplet loss and encoder gradients for a chunk of triplets.
fn triplet_chunk(model: &EncoderModel, index: &DatasetIndex, chunk: &[Triplet], margin: f64) -> Result<(f64, ParamSet)> {
    let obs = |f: crate::dataset::FrameRef| &index.episodes[f.episode].episode.observations[f.frame];
    let frames: Vec<&Observation> = chunk.iter().flat_map(|t| [obs(t.anchor), obs(t.positive), obs(t.negative)]).collect();
    let cache = model.forward(&image_batch(&frames)?)?;
    let emb = cache.output();
    let mut d_out = Tensor2D::zeros(emb.rows(), emb.cols());
    let mut loss = 0.0;
    for i in 0..chunk.len() {
        let r = 3 * i;
        let out = triplet_loss(emb.row(r), emb.row(r + 1), emb.row(r + 2), margin)?;
        loss += out.loss;
        d_out.row_mut(r).copy_from_slice(&out.grad_anchor);
        d_out.row_mut(r + 1).copy_from_slice(&out.grad_positive);
        d_out.row_mut(r + 2).copy_from_slice(&out.grad_negative);
    }
    let mut grads = model.params.zeroed_like();
    model.backward(&cache, &d_out, &mut grads)?;
    Ok((loss, grads))
}

/// Mean triplet loss over a batch with gradients left in `model.params`.
pub fn triplet_batch_loss(model: &mut EncoderModel, index: &DatasetIndex, batch: &[Triplet], margin: f64) -> Result<f64> {
    let chunks: Vec<&[Triplet]> = batch.chunks(CHUNK).collect();
    let parts = map_ordered(&chunks, |c| triplet_chunk(model, index, c, margin));
    model.params.zero_grad();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        model.params.add_grads_from(&g)?;
    }
    let n = batch.len().max(1) as f64;
    model.params.scale_grad(1.0 / n);
    Ok(loss / n)
}

/// Stage I: triplet metric learning of the encoder from a fresh initialisation.
pub fn train_stage1(index: &DatasetIndex, cfg: &Stage1Config) -> Result<(EncoderModel, TrainLog)> {
    train_stage1_from(EncoderModel::new(cfg.seed), index, cfg)
}

pub fn train_stage1_from(mut model: EncoderModel, index: &DatasetIndex, cfg: &Stage1Config) -> Result<(EncoderModel, TrainLog)> {
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }
    if index.iter_split(Split::Train).next().is_none() {
        return Err(KsmError::Precondition("training split is empty".into()));
    }
    if cfg.batch == 0 {
        return Err(KsmError::Precondition("batch size must be positive".into()));
    }
    let mut sampler = TripletSampler::new(index, cfg.triplets)?;
    let per_epoch = cfg.batches_per_epoch.unwrap_or_else(|| sampler.anchor_count().div_ceil(cfg.batch)).max(1);
    let mut rng = named_rng(cfg.seed, "stage1/triplets");
    let mut opt = OptimState::new(&model.params, AdamWConfig::new(cfg.lr, cfg.weight_decay));
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for b in 0..per_epoch {
            let batch = (0..cfg.batch).map(|_| sampler.sample(&mut rng)).collect::<std::result::Result<Vec<_>, _>>()?;
            let loss = triplet_batch_loss(&mut model, index, &batch, cfg.margin)?;
            if !loss.is_finite() {
                return Err(KsmError::NonFiniteLoss {
                    stage: 1,
                    epoch,
                    batch: b,
                    descriptors: batch.iter().map(|t| describe(t, index)).collect(),
                });
            }
            adamw_step(&mut model.params, &mut opt)?;
            total += loss;
        }
        let mean_loss = total / per_epoch as f64;
        log::info!("stage1 epoch {epoch}: mean loss {mean_loss:.6}");
        log.epochs.push(EpochLog { epoch, mean_loss, train_accuracy: None, heldout_accuracy: None, samples: per_epoch * cfg.batch });
    }
    log.sampler_warnings = sampler.warnings;
    model.params.zero_grad();
    Ok((model, log))
}

/// Frozen per-frame embeddings for every episode of `index` (rows = frames).
pub fn embed_episodes(encoder: &EncoderModel, index: &DatasetIndex) -> Result<Vec<Tensor2D>> {
    map_ordered(&index.episodes, |e| {
        let frames: Vec<&Observation> = e.episode.observations.iter().collect();
        Ok(encoder.forward(&image_batch(&frames)?)?.output().clone())
    })
    .into_iter()
    .collect()
}

/// Rows of `emb` at the clamped window ending at `t`.
pub fn window_rows(emb: &Tensor2D, t: usize, k: usize) -> Tensor2D {
    let mut w = Tensor2D::zeros(k, emb.cols());
    for (r, i) in window_indices(t, k).into_iter().enumerate() {
        w.row_mut(r).copy_from_slice(emb.row(i));
    }
    w
}

fn label(p: &TrainingPair) -> f64 {
    if p.label {
        1.0
    } else {
        0.0
    }
}

fn pair_chunk(
    net: &QueryNetModel,
    embeddings: &[Tensor2D],
    chunk: &[TrainingPair],
    pos_weight: f64,
    tau: f64,
) -> Result<(f64, usize, ParamSet)> {
    let mut grads = net.params.zeroed_like();
    let (mut loss, mut correct) = (0.0, 0);
    for p in chunk {
        let w = window_rows(&embeddings[p.episode], p.frame, net.k);
        let (logit, cache) = net.forward(&w, p.task, p.phase)?;
        let (l, dl) = bce_with_logits(logit, label(p), pos_weight)?;
        loss += l;
        correct += usize::from((sigmoid(logit) > tau) == p.label);
        net.backward(&cache, dl, &mut grads)?;
    }
    Ok((loss, correct, grads))
}

/// Mean BCE over a batch with gradients left in `net.params`; returns `(loss, correct)`.
pub fn pair_batch_loss(
    net: &mut QueryNetModel,
    embeddings: &[Tensor2D],
    batch: &[TrainingPair],
    pos_weight: f64,
    tau: f64,
) -> Result<(f64, usize)> {
    let chunks: Vec<&[TrainingPair]> = batch.chunks(CHUNK).collect();
    let parts = map_ordered(&chunks, |c| pair_chunk(net, embeddings, c, pos_weight, tau));
    net.params.zero_grad();
    let (mut loss, mut correct) = (0.0, 0);
    for part in parts {
        let (l, c, g) = part?;
        loss += l;
        correct += c;
        net.params.add_grads_from(&g)?;
    }
    let n = batch.len().max(1) as f64;
    net.params.scale_grad(1.0 / n);
    Ok((loss / n, correct))
}

/// Thresholded accuracy of `net` on `pairs`.
pub fn pair_accuracy(net: &QueryNetModel, embeddings: &[Tensor2D], pairs: &[TrainingPair], tau: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let hits = map_ordered(pairs, |p| -> Result<bool> {
        let w = window_rows(&embeddings[p.episode], p.frame, net.k);
        Ok((net.score(&w, p.task, p.phase)? > tau) == p.label)
    });
    let mut n = 0;
    for h in hits {
        n += usize::from(h?);
    }
    Ok(n as f64 / pairs.len() as f64)
}

fn heldout_pairs(index: &DatasetIndex, cfg: &Stage2Config) -> Result<Vec<TrainingPair>> {
    let mut rng = named_rng(cfg.seed, "stage2/heldout");
    let pairs = if index.iter_split(Split::Test).any(|(_, e)| e.keyframes().len() == e.task().phase_count()) {
        gen_pairs_for_split(index, Split::Test, &cfg.pairs, &mut rng)?.0
    } else {
        Vec::new()
    };
    Ok(pairs)
}

/// Stage II: trains the query network on a frozen encoder. The encoder is
/// checksummed before and after; any change is a freeze violation.
pub fn train_stage2(encoder: &EncoderModel, index: &DatasetIndex, cfg: &Stage2Config) -> Result<(QueryNetModel, TrainLog)> {
    let before = encoder.checksum();
    let mut net = QueryNetModel::new(encoder.dim, cfg.k, cfg.seed);
    let mut log = TrainLog::default();
    if cfg.epochs > 0 {
        if cfg.batch == 0 {
            return Err(KsmError::Precondition("batch size must be positive".into()));
        }
        let embeddings = embed_episodes(encoder, index)?;
        let heldout = heldout_pairs(index, cfg)?;
        let mut rng = named_rng(cfg.seed, "stage2/pairs");
        let mut opt = OptimState::new(&net.params, AdamWConfig::new(cfg.lr, cfg.weight_decay));
        for epoch in 1..=cfg.epochs {
            let (mut pairs, _) = gen_pairs_for_split(index, Split::Train, &cfg.pairs, &mut rng)?;
            if pairs.is_empty() {
                return Err(KsmError::Precondition("no training pairs could be generated".into()));
            }
            pairs.shuffle(&mut rng);
            let (mut total, mut correct) = (0.0, 0);
            for (b, batch) in pairs.chunks(cfg.batch).enumerate() {
                let (loss, c) = pair_batch_loss(&mut net, &embeddings, batch, cfg.pos_weight, cfg.tau)?;
                if !loss.is_finite() {
                    return Err(KsmError::NonFiniteLoss {
                        stage: 2,
                        epoch,
                        batch: b,
                        descriptors: batch.iter().map(|p| format!("{p:?}")).collect(),
                    });
                }
                adamw_step(&mut net.params, &mut opt)?;
                total += loss * batch.len() as f64;
                correct += c;
            }
            let n = pairs.len();
            let heldout_accuracy =
                if heldout.is_empty() { None } else { Some(pair_accuracy(&net, &embeddings, &heldout, cfg.tau)?) };
            log::info!("stage2 epoch {epoch}: mean loss {:.6}", total / n as f64);
            log.epochs.push(EpochLog {
                epoch,
                mean_loss: total / n as f64,
                train_accuracy: Some(correct as f64 / n as f64),
                heldout_accuracy,
                samples: n,
            });
        }
    }
    net.params.zero_grad();
    let after = encoder.checksum();
    if before != after {
        return Err(KsmError::FreezeViolation { before, after });
    }
    Ok((net, log))
}

fn joint_chunk(
    encoder: &EncoderModel,
    net: &QueryNetModel,
    index: &DatasetIndex,
    chunk: &[TrainingPair],
    cfg: &Stage2Config,
) -> Result<(f64, ParamSet, ParamSet)> {
    let mut enc_grads = encoder.params.zeroed_like();
    let mut net_grads = net.params.zeroed_like();
    let mut loss = 0.0;
    for p in chunk {
        let ep = &index.episodes[p.episode].episode;
        let frames: Vec<&Observation> = window_indices(p.frame, cfg.k).into_iter().map(|i| &ep.observations[i]).collect();
        let cache = encoder.forward(&image_batch(&frames)?)?;
        let (logit, fc) = net.forward(cache.output(), p.task, p.phase)?;
        let (l, dl) = bce_with_logits(logit, label(p), cfg.pos_weight)?;
        loss += l;
        let d_window = net.backward(&fc, dl, &mut net_grads)?;
        encoder.backward(&cache, &d_window, &mut enc_grads)?;
    }
    Ok((loss, enc_grads, net_grads))
}

/// Ablation: encoder and query network trained together from scratch on the
/// Stage II objective alone, with no metric pre-training.
pub fn train_joint(index: &DatasetIndex, cfg: &Stage2Config) -> Result<(EncoderModel, QueryNetModel, TrainLog)> {
    let mut encoder = EncoderModel::new(cfg.seed);
    let mut net = QueryNetModel::new(encoder.dim, cfg.k, cfg.seed);
    let mut log = TrainLog::default();
    let mut rng = named_rng(cfg.seed, "joint/pairs");
    let adam = AdamWConfig::new(cfg.lr, cfg.weight_decay);
    let (mut enc_opt, mut net_opt) = (OptimState::new(&encoder.params, adam), OptimState::new(&net.params, adam));
    for epoch in 1..=cfg.epochs {
        let (mut pairs, _) = gen_pairs_for_split(index, Split::Train, &cfg.pairs, &mut rng)?;
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in pairs.chunks(cfg.batch.max(1)).enumerate() {
            let chunks: Vec<&[TrainingPair]> = batch.chunks(CHUNK).collect();
            let parts = map_ordered(&chunks, |c| joint_chunk(&encoder, &net, index, c, cfg));
            encoder.params.zero_grad();
            net.params.zero_grad();
            let mut loss = 0.0;
            for part in parts {
                let (l, eg, ng) = part?;
                loss += l;
                encoder.params.add_grads_from(&eg)?;
                net.params.add_grads_from(&ng)?;
            }
            if !loss.is_finite() {
                return Err(KsmError::NonFiniteLoss {
                    stage: 2,
                    epoch,
                    batch: b,
                    descriptors: batch.iter().map(|p| format!("{p:?}")).collect(),
                });
            }
            let n = batch.len() as f64;
            encoder.params.scale_grad(1.0 / n);
            net.params.scale_grad(1.0 / n);
            adamw_step(&mut encoder.params, &mut enc_opt)?;
            adamw_step(&mut net.params, &mut net_opt)?;
            total += loss;
        }
        let mean_loss = total / pairs.len().max(1) as f64;
        log::info!("joint epoch {epoch}: mean loss {mean_loss:.6}");
        log.epochs.push(EpochLog { epoch, mean_loss, train_accuracy: None, heldout_accuracy: None, samples: pairs.len() });
    }
    encoder.params.zero_grad();
    net.params.zero_grad();
    Ok((encoder, net, log))
}

/// Ablation: Stage II on a randomly initialised, frozen encoder.
pub fn train_without_pretraining(index: &DatasetIndex, cfg: &Stage2Config) -> Result<(EncoderModel, QueryNetModel, TrainLog)> {
    let encoder = EncoderModel::new(cfg.seed);
    let (net, log) = train_stage2(&encoder, index, cfg)?;
    Ok((encoder, net, log))
}
