//! Minimal differentiable kernel: dense layers, single-head attention, FiLM,
//! losses and AdamW. Every backward pass is written out by hand and checked
//! against central finite differences in the tests.

mod attention;
mod checkpoint;
mod film;
mod gradcheck;
mod layers;
mod losses;
mod optim;
mod params;
mod tensor;

pub use attention::{
    attention_backward, attention_forward, cross_attention_score, head_backward, head_forward,
    self_attention, AttentionCache, AttentionGrads, AttentionWeights, HeadCache, HeadGrads,
    HeadWeights, ScoreCache,
};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use film::{film_backward, film_modulate};
pub use gradcheck::{finite_difference_check, GradCheckConfig, GradCheckReport};
pub use layers::{affine_backward, affine_forward, relu_backward, relu_forward, AffineGrads};
pub use losses::{bce_with_logits, euclidean_distance, sigmoid, triplet_loss, TripletOutput};
pub use optim::{adamw_step, AdamWConfig, OptimState};
pub use params::{named_rng, Param, ParamSet};
pub use tensor::{softmax_rows, softmax_rows_backward, Tensor2D};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("non-finite loss at {name}[{index}]")]
    NonFinite { name: String, index: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
