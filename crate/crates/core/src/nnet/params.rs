use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{NnError, Tensor2D};

/// A parameter and its gradient buffer (always the same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor2D,
    pub grad: Tensor2D,
}

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

/// RNG stream derived from a base seed and a stream name.
pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(name.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes))
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor2D) -> Result<(), NnError> {
        if self.params.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        let grad = Tensor2D::zeros(value.rows(), value.cols());
        self.params.insert(name.to_string(), Param { value, grad });
        Ok(())
    }

    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, one RNG stream per name.
    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        seed: u64,
    ) -> Result<(), NnError> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = named_rng(seed, name);
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Tensor2D::from_vec(rows, cols, data)?)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param(&self, name: &str) -> Result<&Param, NnError> {
        self.params.get(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param, NnError> {
        self.params.get_mut(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor2D, NnError> {
        Ok(&self.param(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor2D, NnError> {
        Ok(&mut self.param_mut(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor2D, NnError> {
        Ok(&self.param(name)?.grad)
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Tensor2D) -> Result<(), NnError> {
        self.param_mut(name)?.grad.add_assign(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grad(&mut self, s: f64) {
        for p in self.params.values_mut() {
            p.grad.scale(s);
        }
    }

    /// Adds `other`'s gradients into this set's gradients (same names and shapes required).
    pub fn add_grads_from(&mut self, other: &ParamSet) -> Result<(), NnError> {
        for (name, p) in &other.params {
            self.accumulate_grad(name, &p.grad)?;
        }
        Ok(())
    }

    /// Copy of the parameter values with zeroed gradients.
    pub fn zeroed_like(&self) -> ParamSet {
        let mut out = self.clone();
        out.zero_grad();
        out
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    /// Hex SHA-256 over names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            h.update((p.value.rows() as u32).to_le_bytes());
            h.update((p.value.cols() as u32).to_le_bytes());
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.data().len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_reproducible_and_bounded() {
        let mut a = ParamSet::new();
        a.insert_uniform("w", 16, 4, 16, 7).unwrap();
        let mut b = ParamSet::new();
        b.insert_uniform("w", 16, 4, 16, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.value("w").unwrap().data().iter().all(|v| v.abs() <= 0.25));
        let mut c = ParamSet::new();
        c.insert_uniform("v", 16, 4, 16, 7).unwrap();
        assert_ne!(a.value("w").unwrap(), c.value("v").unwrap());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut a = ParamSet::new();
        a.insert("w", Tensor2D::zeros(1, 1)).unwrap();
        assert!(matches!(a.insert("w", Tensor2D::zeros(1, 1)), Err(NnError::DuplicateParam(_))));
    }
}
