use super::{KsmError, Result};
use crate::envs::TaskId;
use crate::nnet::{
    affine_backward, affine_forward, attention_backward, attention_forward, film_backward, film_modulate,
    head_backward, head_forward, self_attention, sigmoid, AttentionCache, AttentionWeights, HeadWeights, ParamSet, ScoreCache,
    Tensor2D,
};


pub const MAX_PHASES: usize = 5;
pub const HEAD_HIDDEN: usize = 32;

const SA: [&str; 3] = ["sa.wq", "sa.wk", "sa.wv"];
const CA: [&str; 3] = ["ca.wq", "ca.wk", "ca.wv"];
const E_TASK: &str = "q.e_task";
const E_PHASE: &str = "q.e_phase";
const G_W: &str = "q.g_w";
const G_B: &str = "q.g_b";
const HEAD: [&str; 4] = ["head.w1", "head.b1", "head.w2", "head.b2"];

/// Task-conditioned query generator plus window scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryNetModel {
    pub params: ParamSet,
    pub dim: usize,
    pub k: usize,
}

/// Forward intermediates of [`QueryNetModel::make_query`].
#[derive(Debug, Clone)]
pub struct QueryCache {
    task: usize,
    phase_row: usize,
    e_task: Tensor2D,
    e_phase: Tensor2D,
    gamma: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    query: QueryCache,
    self_attn: AttentionCache,
    score: ScoreCache,
}

/// Sinusoidal encoding: `sin(p / 10000^(2i/d))` on even columns, `cos` on odd.
pub fn positional_encoding(k: usize, d: usize) -> Tensor2D {
    let mut pe = Tensor2D::zeros(k, d);
    for p in 0..k {
        for c in 0..d {
            let i = (c / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * i / d as f64);
            pe.set(p, c, if c % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

fn pick_row(t: &Tensor2D, r: usize) -> Tensor2D {
    Tensor2D::row_vector(t.row(r))
}

fn split_halves(t: &Tensor2D, d: usize) -> (Tensor2D, Tensor2D) {
    (Tensor2D::row_vector(&t.row(0)[..d]), Tensor2D::row_vector(&t.row(0)[d..]))
}

/// Residual cross-attention block and head: `MLP(q + CrossAttn(q, H))`.
/// Without the residual the query could only re-weight window rows and would
/// never reach the head directly.
fn residual_score(
    q: &Tensor2D,
    h_vis: &Tensor2D,
    attn: AttentionWeights<'_>,
    head: HeadWeights<'_>,
) -> Result<(f64, ScoreCache)> {
    let (mut attended, attention) = attention_forward(q, h_vis, attn)?;
    attended.add_assign(q)?;
    let (logit, head_cache) = head_forward(&attended, head)?;
    Ok((logit, ScoreCache { attention, attended, head: head_cache }))
}

impl QueryNetModel {
    /// Fresh model. The FiLM generator starts at the identity map
    /// (`γ = 1`, `β = 0`) up to its small random weights.
    pub fn new(dim: usize, k: usize, seed: u64) -> Self {
        let mut p = ParamSet::new();
        let ins = |p: &mut ParamSet, n: &str, r, c, fan| p.insert_uniform(n, r, c, fan, seed).expect("fresh names");
        for n in SA.iter().chain(&CA) {
            ins(&mut p, n, dim, dim, dim);
        }
        ins(&mut p, E_TASK, TaskId::ALL.len(), dim, 1);
        ins(&mut p, E_PHASE, MAX_PHASES, dim, 1);
        ins(&mut p, G_W, dim, 2 * dim, dim);
        let mut gb = Tensor2D::zeros(1, 2 * dim);
        gb.row_mut(0)[..dim].fill(1.0);
        p.insert(G_B, gb).expect("fresh names");
        ins(&mut p, HEAD[0], dim, HEAD_HIDDEN, dim);
        ins(&mut p, HEAD[1], 1, HEAD_HIDDEN, dim);
        ins(&mut p, HEAD[2], HEAD_HIDDEN, 1, HEAD_HIDDEN);
        ins(&mut p, HEAD[3], 1, 1, HEAD_HIDDEN);
        Self { params: p, dim, k }
    }

    pub fn from_params(params: ParamSet, k: usize) -> Result<Self> {
        let dim = params.value(E_PHASE)?.cols();
        let fresh = Self::new(dim, k, 0);
        for (name, p) in fresh.params.iter() {
            let got = params.value(name)?.shape();
            if got != p.value.shape() {
                return Err(KsmError::Checkpoint(format!("{name} has shape {got:?}, expected {:?}", p.value.shape())));
            }
        }
        if params.len() != fresh.params.len() {
            return Err(KsmError::Checkpoint("query network checkpoint has extra tensors".into()));
        }
        Ok(Self { params, dim, k })
    }

    fn sa(&self) -> Result<AttentionWeights<'_>> {
        let p = &self.params;
        Ok(AttentionWeights { wq: p.value(SA[0])?, wk: p.value(SA[1])?, wv: p.value(SA[2])? })
    }

    fn ca(&self) -> Result<AttentionWeights<'_>> {
        let p = &self.params;
        Ok(AttentionWeights { wq: p.value(CA[0])?, wk: p.value(CA[1])?, wv: p.value(CA[2])? })
    }

    fn head(&self) -> Result<HeadWeights<'_>> {
        let p = &self.params;
        Ok(HeadWeights { w1: p.value(HEAD[0])?, b1: p.value(HEAD[1])?, w2: p.value(HEAD[2])?, b2: p.value(HEAD[3])? })
    }

    /// `q = γ ⊙ e_phase[phase] + β` with `[γ, β] = g(e_task[task])`. `phase` is 1-based.
    pub fn make_query(&self, task: TaskId, phase: usize) -> Result<(Tensor2D, QueryCache)> {
        if phase == 0 || phase > MAX_PHASES {
            return Err(KsmError::PhaseOutOfRange { phase, max: MAX_PHASES });
        }
        let p = &self.params;
        let e_task = pick_row(p.value(E_TASK)?, task.index());
        let e_phase = pick_row(p.value(E_PHASE)?, phase - 1);
        let gb = affine_forward(&e_task, p.value(G_W)?, p.value(G_B)?)?;
        let (gamma, beta) = split_halves(&gb, self.dim);
        let q = film_modulate(&e_phase, &gamma, &beta)?;
        Ok((q, QueryCache { task: task.index(), phase_row: phase - 1, e_task, e_phase, gamma }))
    }

    fn query_backward(&self, cache: &QueryCache, dq: &Tensor2D, grads: &mut ParamSet) -> Result<()> {
        let d = self.dim;
        let (de_phase, dgamma, dbeta) = film_backward(&cache.e_phase, &cache.gamma, dq)?;
        let mut dgb = Tensor2D::zeros(1, 2 * d);
        dgb.row_mut(0)[..d].copy_from_slice(dgamma.data());
        dgb.row_mut(0)[d..].copy_from_slice(dbeta.data());
        let g = affine_backward(&cache.e_task, self.params.value(G_W)?, &dgb)?;
        grads.accumulate_grad(G_W, &g.dw)?;
        grads.accumulate_grad(G_B, &g.db)?;
        let mut dt = Tensor2D::zeros(TaskId::ALL.len(), d);
        dt.row_mut(cache.task).copy_from_slice(g.dx.data());
        grads.accumulate_grad(E_TASK, &dt)?;
        let mut dp = Tensor2D::zeros(MAX_PHASES, d);
        dp.row_mut(cache.phase_row).copy_from_slice(de_phase.data());
        grads.accumulate_grad(E_PHASE, &dp)?;
        Ok(())
    }

    /// Raw logit for a window of embeddings (`rows` = frames, oldest first).
    /// Self-attention is residual as well: `H = X + SelfAttn(X)`.
    pub fn forward(&self, window: &Tensor2D, task: TaskId, phase: usize) -> Result<(f64, ForwardCache)> {
        if window.cols() != self.dim || window.rows() == 0 {
            return Err(KsmError::Shape(format!(
                "window is {}x{}, expected rows of width {}",
                window.rows(),
                window.cols(),
                self.dim
            )));
        }
        let x = window.add(&positional_encoding(window.rows(), self.dim))?;
        let (mut h_vis, self_attn) = self_attention(&x, self.sa()?)?;
        h_vis.add_assign(&x)?;
        let (q, query) = self.make_query(task, phase)?;
        let (logit, score) = residual_score(&q, &h_vis, self.ca()?, self.head()?)?;
        Ok((logit, ForwardCache { query, self_attn, score }))
    }

    /// Accumulates parameter gradients for `dlogit` and returns the gradient
    /// with respect to the window embeddings.
    pub fn backward(&self, cache: &ForwardCache, dlogit: f64, grads: &mut ParamSet) -> Result<Tensor2D> {
        let hg = head_backward(&cache.score.head, self.head()?, dlogit)?;
        for (n, g) in HEAD.iter().zip([&hg.dw1, &hg.db1, &hg.dw2, &hg.db2]) {
            grads.accumulate_grad(n, g)?;
        }
        let cg = attention_backward(&cache.score.attention, self.ca()?, &hg.dinput)?;
        for (n, g) in CA.iter().zip([&cg.dwq, &cg.dwk, &cg.dwv]) {
            grads.accumulate_grad(n, g)?;
        }
        let mut dq = cg.dxq;
        dq.add_assign(&hg.dinput)?;
        self.query_backward(&cache.query, &dq, grads)?;
        let sg = attention_backward(&cache.self_attn, self.sa()?, &cg.dxkv)?;
        for (n, g) in SA.iter().zip([&sg.dwq, &sg.dwk, &sg.dwv]) {
            grads.accumulate_grad(n, g)?;
        }
        let mut dx = sg.dxq;
        dx.add_assign(&sg.dxkv)?;
        dx.add_assign(&cg.dxkv)?;
        Ok(dx)
    }

    /// Matching probability in `(0, 1)`.
    pub fn score(&self, window: &Tensor2D, task: TaskId, phase: usize) -> Result<f64> {
        Ok(sigmoid(self.forward(window, task, phase)?.0))
    }
}
