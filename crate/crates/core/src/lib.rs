//! Keyframe memory toolkit: four non-Markovian manipulation tasks, a
//! two-stage keyframe selection module, a greedy-smoothed streaming detector,
//! information-constrained policies and the evaluation harness around them.

pub mod dataset;
pub mod envs;
pub mod evalkit;
pub mod nnet;
pub mod ksm;
pub mod parallel;
pub mod pipeline;
pub mod policies;
