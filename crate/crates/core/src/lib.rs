//! Desk-scale multi-label chest-pathology classification with interpretability.
//!
//! The crate is organised around a small dense tensor type and a reverse-mode
//! autodiff engine over layer DAGs ([`graph`], [`autodiff`]). On top of that sit:
//!
//! - [`preprocess`]: bicubic resize, zero-padding to square, percentile
//!   intensity clipping and normalisation to `[0, 1]`;
//! - [`zoo`]: five toy architectures covering sequential, residual,
//!   parallel-branch, branch+residual and dense-concatenation connectivity;
//! - [`labels`]: the pathology hierarchy with ancestor-closure expansion and
//!   consistency checking;
//! - [`train`]: numerically stable BCE-with-logits, Adam, subject-level
//!   splitting, k-fold cross-validation and the training loop;
//! - [`metrics`]: per-class confusion accounting with macro and micro
//!   precision/recall/F1 plus soft-vote ensembling;
//! - [`attribution`]: occlusion, saliency, input×gradient, guided
//!   backpropagation, integrated gradients and DeepLIFT (rescale rule).
//!
//! The numeric core is generic over the scalar type via [`Scalar`]
//! (`f32`/`f64`); the aliases below fix `f64`, which is what the CLI, the
//! model container and all golden files use.

pub mod attribution;
pub mod autodiff;
pub mod error;
pub mod export;
pub mod graph;
pub mod image_io;
pub mod labels;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod model_io;
pub mod optim;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod split;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default tensor with 64-bit float elements.
pub type Tensor = tensor::Tensor<f64>;
/// Default model graph with 64-bit float parameters.
pub type ModelGraph = graph::ModelGraph<f64>;
/// Default activation record produced by [`graph::ModelGraph::forward`].
pub type ActivationRecord = autodiff::ActivationRecord<f64>;
/// Default attribution map with 64-bit float scores.
pub type AttributionMap = attribution::AttributionMap<f64>;
