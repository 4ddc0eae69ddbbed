//! A self-contained, CPU-only deep-learning micro-framework built around the
//! CoroNet chest X-ray classifier: an Xception-style separable-convolution
//! backbone with a dropout + two-dense-layer head.
//!
//! The crate provides:
//!
//! - [`tensor`]: dense row-major tensors with deterministic numeric kernels;
//! - [`layers`]: convolution, depthwise separable convolution, pooling,
//!   batch norm, dropout, dense, residual add, ReLU and softmax, each with a
//!   hand-written backward pass;
//! - [`graph`]: a layer DAG with cached-activation forward and reverse-mode
//!   backpropagation;
//! - [`train`]: cross-entropy loss, Adam, the seeded training loop and head
//!   fine-tuning;
//! - [`model`]: the CoroNet builder (full and mini variants), exact parameter
//!   accounting, batch prediction and a bit-exact weights file format;
//! - [`data`]: manifest ingestion, PGM decoding, bilinear resize, random
//!   under-sampling, label merging and stratified k-fold splitting;
//! - [`metrics`]: confusion matrices, per-class precision/recall/specificity/
//!   F-measure, macro averages and cross-validation summaries;
//! - [`cli`]: the `coronet` command-line tool built from the pieces above.
//!
//! Everything stochastic takes an explicit seed and every kernel reduces in a
//! fixed order, so identical inputs produce bit-identical outputs.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod history;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
