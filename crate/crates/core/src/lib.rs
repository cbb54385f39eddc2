//! Generative retrieval over semantic item ids, desk scale.
//!
//! The crate covers the full loop: residual quantization of item features
//! into semantic ids, a small decoder-only sequence model with exact
//! reverse-mode gradients, listwise preference training on tiered feedback,
//! a rank head that rescores candidate codewords against the sequence,
//! two-stage beam-search retrieval, synthetic data generation, hit-rate
//! evaluation, and a discrete-event simulation of the asynchronous serving
//! path.

pub mod error;
pub mod quantizer;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;
