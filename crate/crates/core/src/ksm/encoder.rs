use super::{KsmError, Result};
use crate::envs::{Observation, IMAGE_LEN};
use crate::nnet::{affine_backward, affine_forward, relu_backward, relu_forward, ParamSet, Tensor2D};

pub const ENCODER_HIDDEN: usize = 128;
pub const EMBED_DIM: usize = 32;

const W1: &str = "enc.w1";
const B1: &str = "enc.b1";
const W2: &str = "enc.w2";
const B2: &str = "enc.b2";

/// Visual encoder: flattened image through two affine+ReLU layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub params: ParamSet,
    pub input_dim: usize,
    pub hidden: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Tensor2D,
    hidden: Tensor2D,
    out: Tensor2D,
}

impl EncoderCache {
    pub fn output(&self) -> &Tensor2D {
        &self.out
    }
}

impl EncoderModel {
    pub fn new(seed: u64) -> Self {
        Self::with_dims(IMAGE_LEN, ENCODER_HIDDEN, EMBED_DIM, seed)
    }

    pub fn with_dims(input_dim: usize, hidden: usize, dim: usize, seed: u64) -> Self {
        let mut params = ParamSet::new();
        params.insert_uniform(W1, input_dim, hidden, input_dim, seed).expect("fresh names");
        params.insert_uniform(B1, 1, hidden, input_dim, seed).expect("fresh names");
        params.insert_uniform(W2, hidden, dim, hidden, seed).expect("fresh names");
        params.insert_uniform(B2, 1, dim, hidden, seed).expect("fresh names");
        Self { params, input_dim, hidden, dim }
    }

    /// Rebuilds a model from loaded parameters, taking dimensions from shapes.
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let (input_dim, hidden) = params.value(W1)?.shape();
        let dim = params.value(W2)?.cols();
        if params.value(W2)?.rows() != hidden || params.value(B1)?.shape() != (1, hidden) || params.value(B2)?.shape() != (1, dim) {
            return Err(KsmError::Checkpoint("encoder parameter shapes are inconsistent".into()));
        }
        if params.len() != 4 {
            return Err(KsmError::Checkpoint(format!("encoder expects 4 tensors, found {}", params.len())));
        }
        Ok(Self { params, input_dim, hidden, dim })
    }

    /// Batched forward over the rows of `x`.
    pub fn forward(&self, x: &Tensor2D) -> Result<EncoderCache> {
        if x.cols() != self.input_dim {
            return Err(KsmError::Shape(format!("encoder input has {} values, expected {}", x.cols(), self.input_dim)));
        }
        let p = &self.params;
        let hidden = relu_forward(&affine_forward(x, p.value(W1)?, p.value(B1)?)?);
        let out = relu_forward(&affine_forward(&hidden, p.value(W2)?, p.value(B2)?)?);
        Ok(EncoderCache { input: x.clone(), hidden, out })
    }

    /// Accumulates parameter gradients for `d_out` into `grads` (same names).
    pub fn backward(&self, cache: &EncoderCache, d_out: &Tensor2D, grads: &mut ParamSet) -> Result<()> {
        let p = &self.params;
        let d2 = relu_backward(&cache.out, d_out);
        let g2 = affine_backward(&cache.hidden, p.value(W2)?, &d2)?;
        let d1 = relu_backward(&cache.hidden, &g2.dx);
        let g1 = affine_backward(&cache.input, p.value(W1)?, &d1)?;
        grads.accumulate_grad(W2, &g2.dw)?;
        grads.accumulate_grad(B2, &g2.db)?;
        grads.accumulate_grad(W1, &g1.dw)?;
        grads.accumulate_grad(B1, &g1.db)?;
        Ok(())
    }

    pub fn encode(&self, image: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor2D::from_vec(1, image.len(), image.to_vec())?;
        Ok(self.forward(&x)?.out.into_data())
    }

    pub fn encode_observation(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.encode(&obs.image())
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }
}

/// Stacks observation images into one input matrix.
pub fn image_batch(observations: &[&Observation]) -> Result<Tensor2D> {
    let mut data = Vec::with_capacity(observations.len() * IMAGE_LEN);
    for o in observations {
        if o.pixels.len() != IMAGE_LEN {
            return Err(KsmError::Shape(format!("observation has {} pixels, expected {IMAGE_LEN}", o.pixels.len())));
        }
        data.extend(o.image());
    }
    Ok(Tensor2D::from_vec(observations.len(), IMAGE_LEN, data)?)
}
