use super::layers::{affine_backward, affine_forward, relu_backward, relu_forward};
use super::tensor::{softmax_rows, softmax_rows_backward};
use super::{NnError, Tensor2D};

/// Projections of a single attention head. Inputs are multiplied on the right:
/// `Q = xq·wq`, `K = xkv·wk`, `V = xkv·wv`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor2D,
    pub wk: &'a Tensor2D,
    pub wv: &'a Tensor2D,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub xq: Tensor2D,
    pub xkv: Tensor2D,
    pub q: Tensor2D,
    pub k: Tensor2D,
    pub v: Tensor2D,
    /// Attention weights, one softmax row per query.
    pub weights: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dxq: Tensor2D,
    pub dxkv: Tensor2D,
    pub dwq: Tensor2D,
    pub dwk: Tensor2D,
    pub dwv: Tensor2D,
}

/// Scaled dot-product attention of the rows of `xq` over the rows of `xkv`.
pub fn attention_forward(
    xq: &Tensor2D,
    xkv: &Tensor2D,
    w: AttentionWeights<'_>,
) -> Result<(Tensor2D, AttentionCache), NnError> {
    if xq.rows() == 0 || xkv.rows() == 0 {
        return Err(NnError::Precondition("attention over an empty sequence".into()));
    }
    if w.wq.cols() != w.wk.cols() {
        return Err(NnError::Shape { op: "attention(key dim)", left: w.wq.shape(), right: w.wk.shape() });
    }
    let q = xq.matmul(w.wq)?;
    let k = xkv.matmul(w.wk)?;
    let v = xkv.matmul(w.wv)?;
    let mut scores = q.matmul_t(&k)?;
    scores.scale(1.0 / (w.wq.cols() as f64).sqrt());
    let weights = softmax_rows(&scores);
    let out = weights.matmul(&v)?;
    let cache = AttentionCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, weights };
    Ok((out, cache))
}

pub fn attention_backward(
    cache: &AttentionCache,
    w: AttentionWeights<'_>,
    dout: &Tensor2D,
) -> Result<AttentionGrads, NnError> {
    let scale = 1.0 / (w.wq.cols() as f64).sqrt();
    let dv = cache.weights.t_matmul(dout)?;
    let dweights = dout.matmul_t(&cache.v)?;
    let mut dscores = softmax_rows_backward(&cache.weights, &dweights);
    dscores.scale(scale);
    let dq = dscores.matmul(&cache.k)?;
    let dk = dscores.t_matmul(&cache.q)?;
    let dwq = cache.xq.t_matmul(&dq)?;
    let dwk = cache.xkv.t_matmul(&dk)?;
    let dwv = cache.xkv.t_matmul(&dv)?;
    let dxq = dq.matmul_t(w.wq)?;
    let mut dxkv = dk.matmul_t(w.wk)?;
    dxkv.add_assign(&dv.matmul_t(w.wv)?)?;
    Ok(AttentionGrads { dxq, dxkv, dwq, dwk, dwv })
}

/// Single-head self-attention over a window of `k` embedding rows.
pub fn self_attention(
    window: &Tensor2D,
    w: AttentionWeights<'_>,
) -> Result<(Tensor2D, AttentionCache), NnError> {
    if window.rows() == 0 {
        return Err(NnError::Precondition("self-attention window is empty".into()));
    }
    attention_forward(window, window, w)
}

/// Two-layer scoring head: `relu(x·w1 + b1)·w2 + b2`, with `w2` of width one.
#[derive(Debug, Clone, Copy)]
pub struct HeadWeights<'a> {
    pub w1: &'a Tensor2D,
    pub b1: &'a Tensor2D,
    pub w2: &'a Tensor2D,
    pub b2: &'a Tensor2D,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    pub input: Tensor2D,
    pub hidden: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub dinput: Tensor2D,
    pub dw1: Tensor2D,
    pub db1: Tensor2D,
    pub dw2: Tensor2D,
    pub db2: Tensor2D,
}

pub fn head_forward(x: &Tensor2D, w: HeadWeights<'_>) -> Result<(f64, HeadCache), NnError> {
    if w.w2.cols() != 1 || x.rows() != 1 {
        return Err(NnError::Shape { op: "head_forward", left: x.shape(), right: w.w2.shape() });
    }
    let hidden = relu_forward(&affine_forward(x, w.w1, w.b1)?);
    let logit = affine_forward(&hidden, w.w2, w.b2)?.get(0, 0);
    Ok((logit, HeadCache { input: x.clone(), hidden }))
}

pub fn head_backward(cache: &HeadCache, w: HeadWeights<'_>, dlogit: f64) -> Result<HeadGrads, NnError> {
    let dy = Tensor2D::row_vector(&[dlogit]);
    let g2 = affine_backward(&cache.hidden, w.w2, &dy)?;
    let dpre = relu_backward(&cache.hidden, &g2.dx);
    let g1 = affine_backward(&cache.input, w.w1, &dpre)?;
    Ok(HeadGrads { dinput: g1.dx, dw1: g1.dw, db1: g1.db, dw2: g2.dw, db2: g2.db })
}

#[derive(Debug, Clone)]
pub struct ScoreCache {
    pub attention: AttentionCache,
    pub attended: Tensor2D,
    pub head: HeadCache,
}

/// Cross-attention of one query row over `h_vis` (keys = values = `h_vis`),
/// followed by the scoring head. Returns the raw logit.
pub fn cross_attention_score(
    q_logic: &Tensor2D,
    h_vis: &Tensor2D,
    attn: AttentionWeights<'_>,
    head: HeadWeights<'_>,
) -> Result<(f64, ScoreCache), NnError> {
    if h_vis.rows() == 0 {
        return Err(NnError::Precondition("cross-attention over empty H_vis".into()));
    }
    if q_logic.rows() != 1 {
        return Err(NnError::Shape { op: "cross_attention_score(query)", left: q_logic.shape(), right: (1, q_logic.cols()) });
    }
    let (attended, attention) = attention_forward(q_logic, h_vis, attn)?;
    let (logit, head_cache) = head_forward(&attended, head)?;
    Ok((logit, ScoreCache { attention, attended, head: head_cache }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::ParamSet;

    fn weights(d: usize, seed: u64) -> ParamSet {
        let mut p = ParamSet::new();
        for n in ["wq", "wk", "wv"] {
            p.insert_uniform(n, d, d, d, seed).unwrap();
        }
        p
    }

    fn aw(p: &ParamSet) -> AttentionWeights<'_> {
        AttentionWeights { wq: p.value("wq").unwrap(), wk: p.value("wk").unwrap(), wv: p.value("wv").unwrap() }
    }

    #[test]
    fn single_row_window_has_unit_weight() {
        let p = weights(4, 1);
        let x = Tensor2D::row_vector(&[0.3, -0.2, 0.9, 1.1]);
        let (out, cache) = self_attention(&x, aw(&p)).unwrap();
        assert_eq!(cache.weights.data(), &[1.0]);
        let v = x.matmul(p.value("wv").unwrap()).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn identical_rows_split_attention_evenly() {
        let p = weights(3, 2);
        let x = Tensor2D::from_rows(&[vec![0.5, 1.0, -1.0], vec![0.5, 1.0, -1.0]]).unwrap();
        let (_, cache) = self_attention(&x, aw(&p)).unwrap();
        for v in cache.weights.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_window_is_rejected() {
        let p = weights(3, 2);
        let x = Tensor2D::zeros(0, 3);
        assert!(matches!(self_attention(&x, aw(&p)), Err(NnError::Precondition(_))));
    }
}
