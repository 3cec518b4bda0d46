//! Context-encoding transformer for multi-turn spoken language
//! understanding, built from scratch on a minimal autodiff tensor engine.
//!
//! The crate provides:
//! - [`tensor`]: dense tensors, reverse-mode autodiff, Adam, gradient checks
//! - [`tokenizer`]: trainable subword tokenizer with word alignment
//! - [`data`]: dialogue corpus model, JSON schema, BIO codec, input assembly,
//!   synthetic corpus generation
//! - [`model`]: input embeddings, transformer encoder, intent / user-act /
//!   slot heads with an optional CRF layer
//! - [`training`]: the four-stage transfer-learning pipeline (pretraining,
//!   unsupervised and supervised adaptive training, fine-tuning)
//! - [`evaluation`]: intent accuracy, span F1, act F1, frame accuracy
//!
//! All numeric code is generic over [`Scalar`]; use the `f64` aliases for
//! verification work and `f32` for training.

pub mod check;
pub mod data;
pub mod evaluation;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use scalar::Scalar;
pub use tensor::Tensor;

/// Training-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Verification-precision tensor (gradient checks, oracles).
pub type Tensor64 = tensor::Tensor<f64>;
/// Training-precision parameter set.
pub type ModelParameters32 = model::ModelParameters<f32>;
/// Verification-precision parameter set.
pub type ModelParameters64 = model::ModelParameters<f64>;
