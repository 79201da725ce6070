//! Finite-difference fixtures shared by the layer tests, the model tests and
//! the acceptance run. Each case returns the report for one gradient path.
#![allow(dead_code)]

use kfchain::envs::TaskId;
use kfchain::ksm::{EncoderModel, KsmError, QueryNetModel};
use kfchain::nnet::*;
use rand::Rng;

pub type Case = (&'static str, GradCheckReport);

pub fn random_rows(rows: usize, cols: usize, seed: u64) -> Tensor2D {
    let mut rng = named_rng(seed, "fixture");
    Tensor2D::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn nn(e: KsmError) -> NnError {
    NnError::Precondition(e.to_string())
}

fn dot(a: &Tensor2D, b: &Tensor2D) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn params(items: &[(&str, &Tensor2D)]) -> ParamSet {
    let mut p = ParamSet::new();
    for (n, t) in items {
        p.insert(n, (*t).clone()).unwrap();
    }
    p
}

fn check(p: &ParamSet, f: impl FnMut(&ParamSet) -> Result<f64, NnError>) -> GradCheckReport {
    finite_difference_check(p, f, GradCheckConfig::default()).unwrap()
}

/// Checks a layer through the scalar probe `L = sum(forward(p) ⊙ r)`, whose
/// upstream gradient is exactly `r`.
fn layer_case(
    inputs: &[(&str, &Tensor2D)],
    forward: impl Fn(&ParamSet) -> Result<Tensor2D, NnError>,
    backward: impl Fn(&ParamSet, &Tensor2D) -> Result<Vec<(&'static str, Tensor2D)>, NnError>,
    seed: u64,
) -> GradCheckReport {
    let mut p = params(inputs);
    let out = forward(&p).unwrap();
    let r = random_rows(out.rows(), out.cols(), seed);
    for (n, g) in backward(&p, &r).unwrap() {
        p.accumulate_grad(n, &g).unwrap();
    }
    check(&p, |q| Ok(dot(&forward(q)?, &r)))
}

pub fn affine_case() -> GradCheckReport {
    let (x, w, b) = (random_rows(4, 6, 1), random_rows(6, 5, 2), random_rows(1, 5, 3));
    layer_case(
        &[("x", &x), ("w", &w), ("b", &b)],
        |p| affine_forward(p.value("x")?, p.value("w")?, p.value("b")?),
        |p, dy| {
            let g = affine_backward(p.value("x")?, p.value("w")?, dy)?;
            Ok(vec![("x", g.dx), ("w", g.dw), ("b", g.db)])
        },
        4,
    )
}

pub fn relu_case() -> GradCheckReport {
    // Keep inputs away from the kink so central differences stay one-sided-free.
    let x = random_rows(5, 12, 5).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    layer_case(
        &[("x", &x)],
        |p| Ok(relu_forward(p.value("x")?)),
        |p, dy| Ok(vec![("x", relu_backward(&relu_forward(p.value("x")?), dy))]),
        6,
    )
}

pub fn softmax_case() -> GradCheckReport {
    let x = random_rows(5, 12, 7).map(|v| 3.0 * v);
    layer_case(
        &[("x", &x)],
        |p| Ok(softmax_rows(p.value("x")?)),
        |p, dy| Ok(vec![("x", softmax_rows_backward(&softmax_rows(p.value("x")?), dy))]),
        8,
    )
}

fn weights(p: &ParamSet) -> Result<AttentionWeights<'_>, NnError> {
    Ok(AttentionWeights { wq: p.value("wq")?, wk: p.value("wk")?, wv: p.value("wv")? })
}

pub fn cross_attention_case() -> GradCheckReport {
    let (xq, xkv) = (random_rows(2, 6, 9), random_rows(4, 6, 10));
    let (wq, wk, wv) = (random_rows(6, 4, 11), random_rows(6, 4, 12), random_rows(6, 5, 13));
    layer_case(
        &[("xq", &xq), ("xkv", &xkv), ("wq", &wq), ("wk", &wk), ("wv", &wv)],
        |p| Ok(attention_forward(p.value("xq")?, p.value("xkv")?, weights(p)?)?.0),
        |p, dy| {
            let (_, cache) = attention_forward(p.value("xq")?, p.value("xkv")?, weights(p)?)?;
            let g = attention_backward(&cache, weights(p)?, dy)?;
            Ok(vec![("xq", g.dxq), ("xkv", g.dxkv), ("wq", g.dwq), ("wk", g.dwk), ("wv", g.dwv)])
        },
        14,
    )
}

pub fn self_attention_case() -> GradCheckReport {
    let x = random_rows(3, 6, 15);
    let (wq, wk, wv) = (random_rows(6, 6, 16), random_rows(6, 6, 17), random_rows(6, 6, 18));
    layer_case(
        &[("x", &x), ("wq", &wq), ("wk", &wk), ("wv", &wv)],
        |p| Ok(self_attention(p.value("x")?, weights(p)?)?.0),
        |p, dy| {
            let (_, cache) = self_attention(p.value("x")?, weights(p)?)?;
            let g = attention_backward(&cache, weights(p)?, dy)?;
            let mut dx = g.dxq;
            dx.add_assign(&g.dxkv)?;
            Ok(vec![("x", dx), ("wq", g.dwq), ("wk", g.dwk), ("wv", g.dwv)])
        },
        19,
    )
}

pub fn film_case() -> GradCheckReport {
    let (e, g, b) = (random_rows(1, 60, 20), random_rows(1, 60, 21), random_rows(1, 60, 22));
    layer_case(
        &[("e", &e), ("gamma", &g), ("beta", &b)],
        |p| film_modulate(p.value("e")?, p.value("gamma")?, p.value("beta")?),
        |p, dy| {
            let (de, dg, db) = film_backward(p.value("e")?, p.value("gamma")?, dy)?;
            Ok(vec![("e", de), ("gamma", dg), ("beta", db)])
        },
        23,
    )
}

fn head(p: &ParamSet) -> Result<HeadWeights<'_>, NnError> {
    Ok(HeadWeights { w1: p.value("w1")?, b1: p.value("b1")?, w2: p.value("w2")?, b2: p.value("b2")? })
}

pub fn head_case() -> GradCheckReport {
    let (x, w1, b1) = (random_rows(1, 8, 24), random_rows(8, 10, 25), random_rows(1, 10, 26));
    let (w2, b2) = (random_rows(10, 1, 27), random_rows(1, 1, 28));
    layer_case(
        &[("x", &x), ("w1", &w1), ("b1", &b1), ("w2", &w2), ("b2", &b2)],
        |p| Ok(Tensor2D::row_vector(&[head_forward(p.value("x")?, head(p)?)?.0])),
        |p, dy| {
            let (_, cache) = head_forward(p.value("x")?, head(p)?)?;
            let g = head_backward(&cache, head(p)?, dy.get(0, 0))?;
            Ok(vec![("x", g.dinput), ("w1", g.dw1), ("b1", g.db1), ("w2", g.dw2), ("b2", g.db2)])
        },
        29,
    )
}

pub fn triplet_case() -> GradCheckReport {
    let (a, pos, neg) = (random_rows(1, 20, 30), random_rows(1, 20, 31), random_rows(1, 20, 32));
    let margin = 10.0;
    let mut p = params(&[("a", &a), ("p", &pos), ("n", &neg)]);
    let t = triplet_loss(a.data(), pos.data(), neg.data(), margin).unwrap();
    assert!(t.active());
    p.accumulate_grad("a", &Tensor2D::row_vector(&t.grad_anchor)).unwrap();
    p.accumulate_grad("p", &Tensor2D::row_vector(&t.grad_positive)).unwrap();
    p.accumulate_grad("n", &Tensor2D::row_vector(&t.grad_negative)).unwrap();
    check(&p, |q| Ok(triplet_loss(q.value("a")?.data(), q.value("p")?.data(), q.value("n")?.data(), margin)?.loss))
}

pub fn bce_case() -> GradCheckReport {
    let z = random_rows(1, 60, 33).map(|v| 4.0 * v);
    let label = |i: usize| (i % 2) as f64;
    let loss = |z: &Tensor2D| -> Result<f64, NnError> {
        z.data().iter().enumerate().map(|(i, &v)| Ok(bce_with_logits(v, label(i), 5.0)?.0)).sum()
    };
    let grads: Vec<f64> =
        z.data().iter().enumerate().map(|(i, &v)| bce_with_logits(v, label(i), 5.0).unwrap().1).collect();
    let mut p = params(&[("z", &z)]);
    p.accumulate_grad("z", &Tensor2D::row_vector(&grads)).unwrap();
    check(&p, |q| loss(q.value("z")?))
}

pub fn stage2_loss_case() -> GradCheckReport {
    let net = QueryNetModel::new(8, 3, 4);
    let window = random_rows(3, 8, 1);
    let cases = [(TaskId::Counting, 2, 1.0), (TaskId::Temporal, 4, 0.0), (TaskId::Identity, 3, 1.0)];
    let mut grads = net.params.zeroed_like();
    for (task, phase, y) in cases {
        let (z, cache) = net.forward(&window, task, phase).unwrap();
        let (_, dz) = bce_with_logits(z, y, 5.0).unwrap();
        net.backward(&cache, dz, &mut grads).unwrap();
    }
    assert!(grads.grad("q.e_task").unwrap().data().iter().any(|g| *g != 0.0));
    check(&grads, |p| {
        let m = QueryNetModel { params: p.clone(), ..net.clone() };
        let mut total = 0.0;
        for (task, phase, y) in cases {
            let (z, _) = m.forward(&window, task, phase).map_err(nn)?;
            total += bce_with_logits(z, y, 5.0)?.0;
        }
        Ok(total)
    })
}

pub fn stage2_window_case() -> GradCheckReport {
    let net = QueryNetModel::new(20, 3, 9);
    let window = random_rows(3, 20, 2);
    let mut p = params(&[("window", &window)]);
    let (z, cache) = net.forward(&window, TaskId::Spatial, 1).unwrap();
    let (_, dz) = bce_with_logits(z, 1.0, 5.0).unwrap();
    let dx = net.backward(&cache, dz, &mut net.params.zeroed_like()).unwrap();
    p.accumulate_grad("window", &dx).unwrap();
    check(&p, |q| {
        let (z, _) = net.forward(q.value("window")?, TaskId::Spatial, 1).map_err(nn)?;
        Ok(bce_with_logits(z, 1.0, 5.0)?.0)
    })
}

fn triplet_loss_of(model: &EncoderModel, x: &Tensor2D) -> Result<f64, KsmError> {
    let emb = model.forward(x)?;
    let e = emb.output();
    let mut total = 0.0;
    for i in 0..x.rows() / 3 {
        total += triplet_loss(e.row(3 * i), e.row(3 * i + 1), e.row(3 * i + 2), 1.0)?.loss;
    }
    Ok(total)
}

pub fn stage1_loss_case() -> GradCheckReport {
    let model = EncoderModel::with_dims(24, 16, 6, 3);
    let x = random_rows(6, 24, 5).map(|v| v.abs());
    let cache = model.forward(&x).unwrap();
    let e = cache.output();
    let mut d = Tensor2D::zeros(6, 6);
    for i in 0..2 {
        let t = triplet_loss(e.row(3 * i), e.row(3 * i + 1), e.row(3 * i + 2), 1.0).unwrap();
        assert!(t.active());
        d.row_mut(3 * i).copy_from_slice(&t.grad_anchor);
        d.row_mut(3 * i + 1).copy_from_slice(&t.grad_positive);
        d.row_mut(3 * i + 2).copy_from_slice(&t.grad_negative);
    }
    let mut grads = model.params.zeroed_like();
    model.backward(&cache, &d, &mut grads).unwrap();
    check(&grads, |p| triplet_loss_of(&EncoderModel { params: p.clone(), ..model.clone() }, &x).map_err(nn))
}

pub fn joint_path_case() -> GradCheckReport {
    let enc = EncoderModel::with_dims(20, 12, 8, 6);
    let net = QueryNetModel::new(8, 3, 6);
    let x = random_rows(3, 20, 8).map(|v| v.abs());
    let mut all = ParamSet::new();
    for (n, p) in enc.params.iter().chain(net.params.iter()) {
        all.insert(n, p.value.clone()).unwrap();
    }
    let split = |p: &ParamSet| {
        let pick = |names: Vec<&str>| {
            let mut s = ParamSet::new();
            for n in names {
                s.insert(n, p.value(n).unwrap().clone()).unwrap();
            }
            s
        };
        (
            EncoderModel { params: pick(enc.params.names().collect()), ..enc.clone() },
            QueryNetModel { params: pick(net.params.names().collect()), ..net.clone() },
        )
    };
    let c = enc.forward(&x).unwrap();
    let (z, fc) = net.forward(c.output(), TaskId::Identity, 2).unwrap();
    let (_, dz) = bce_with_logits(z, 1.0, 5.0).unwrap();
    let (mut eg, mut ng) = (enc.params.zeroed_like(), net.params.zeroed_like());
    let dw = net.backward(&fc, dz, &mut ng).unwrap();
    enc.backward(&c, &dw, &mut eg).unwrap();
    for (n, p) in eg.iter().chain(ng.iter()) {
        all.accumulate_grad(n, &p.grad).unwrap();
    }
    check(&all, |p| {
        let (e, q) = split(p);
        let c = e.forward(&x).map_err(nn)?;
        let (z, _) = q.forward(c.output(), TaskId::Identity, 2).map_err(nn)?;
        Ok(bce_with_logits(z, 1.0, 5.0)?.0)
    })
}

pub fn layer_cases() -> Vec<Case> {
    vec![
        ("affine", affine_case()),
        ("relu", relu_case()),
        ("softmax", softmax_case()),
        ("cross-attention", cross_attention_case()),
        ("self-attention", self_attention_case()),
        ("film", film_case()),
        ("scoring-head", head_case()),
        ("triplet-loss", triplet_case()),
        ("weighted-bce", bce_case()),
    ]
}

pub fn model_cases() -> Vec<Case> {
    vec![
        ("stage1-triplet-path", stage1_loss_case()),
        ("stage2-bce-path", stage2_loss_case()),
        ("stage2-window-input", stage2_window_case()),
        ("joint-path", joint_path_case()),
    ]
}

/// Fails with a readable message unless the case checked enough coordinates
/// and stayed within tolerance.
pub fn assert_case((name, r): &Case) {
    assert!(r.checked >= 50, "{name}: only {} coordinates", r.checked);
    assert!(r.passed, "{name}: max rel err {} at {:?}: {:?}", r.max_rel_err, r.worst, r.failures);
}
