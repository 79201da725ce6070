use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    pub step: u64,
    first: BTreeMap<String, Tensor2D>,
    second: BTreeMap<String, Tensor2D>,
}

impl OptimState {
    pub fn new(params: &ParamSet, config: AdamWConfig) -> Self {
        let zeros = |_: ()| {
            params
                .iter()
                .map(|(n, p)| (n.to_string(), Tensor2D::zeros(p.value.rows(), p.value.cols())))
                .collect::<BTreeMap<_, _>>()
        };
        Self { config, step: 0, first: zeros(()), second: zeros(()) }
    }
}

/// One decoupled-weight-decay Adam step over every parameter in `params`.
pub fn adamw_step(params: &mut ParamSet, opt: &mut OptimState) -> Result<(), NnError> {
    let c = opt.config;
    for (name, p) in params.iter() {
        if p.grad.shape() != p.value.shape() {
            return Err(NnError::Shape { op: "adamw_step", left: p.value.shape(), right: p.grad.shape() });
        }
        match opt.first.get(name) {
            Some(m) if m.shape() == p.value.shape() => {}
            _ => return Err(NnError::UnknownParam(format!("{name} (no optimizer moments)"))),
        }
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let m = opt.first.get_mut(name).expect("checked above");
        let v = opt.second.get_mut(name).expect("moments share keys");
        let values = p.value.data_mut();
        for (i, &g) in p.grad.data().iter().enumerate() {
            values[i] -= c.lr * c.weight_decay * values[i];
            let mi = &mut m.data_mut()[i];
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
            let vi = &mut v.data_mut()[i];
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
            let m_hat = m.data()[i] / bc1;
            let v_hat = v.data()[i] / bc2;
            values[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor2D::row_vector(&[v])).unwrap();
        p
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar(0.7);
        let mut opt = OptimState::new(&p, AdamWConfig::new(0.1, 0.0));
        adamw_step(&mut p, &mut opt).unwrap();
        assert_eq!(p.value("w").unwrap().get(0, 0), 0.7);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -250.0] {
            let mut p = scalar(1.0);
            p.param_mut("w").unwrap().grad = Tensor2D::row_vector(&[g]);
            let mut opt = OptimState::new(&p, AdamWConfig::new(0.01, 0.0));
            adamw_step(&mut p, &mut opt).unwrap();
            let moved = p.value("w").unwrap().get(0, 0) - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-9, "{moved}");
        }
    }

    #[test]
    fn quadratic_descent_is_monotone() {
        let mut p = scalar(1.0);
        let mut opt = OptimState::new(&p, AdamWConfig::new(0.1, 0.0));
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let w = p.value("w").unwrap().get(0, 0);
            p.param_mut("w").unwrap().grad = Tensor2D::row_vector(&[2.0 * w]);
            adamw_step(&mut p, &mut opt).unwrap();
            let now = p.value("w").unwrap().get(0, 0).abs();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn mismatched_gradient_shape_is_an_error() {
        let mut p = scalar(1.0);
        let mut opt = OptimState::new(&p, AdamWConfig::new(0.1, 0.0));
        p.param_mut("w").unwrap().grad = Tensor2D::zeros(2, 1);
        assert!(adamw_step(&mut p, &mut opt).is_err());
    }
}
