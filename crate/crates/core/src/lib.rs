//! Online motion style transfer.
//!
//! A frame-by-frame stylizer built from an encoder, a bank of residual LSTM
//! branches (one neutral basis plus one per style) and a conditional
//! decoder. It is trained against a feature/temporal attention critic and a
//! perceptual loss from a frozen, instance-normalized content classifier.
//!
//! Module map:
//!
//! * [`motion`]: quaternions, skeletons, forward kinematics, frame features.
//! * [`io`]: BVH subset parser/writer, resampling, windowing, synthetic gaits,
//!   dataset splitting and the clip cache.
//! * [`nn`]: a small reverse-mode autodiff tape (with second-order support for
//!   the gradient penalty), layers, parameter store, Adam and checkpoints.
//! * [`model`]: the generator and streaming sessions.
//! * [`supervision`]: the attention critic and the content classifier.
//! * [`training`]: loss terms, task sampling and the adversarial loop.
//! * [`eval`]: Fréchet motion distance with a denoising-autoencoder extractor.
//! * [`service`]: the newline-delimited JSON stream protocol and latency bench.

pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod motion;
pub mod nn;
pub mod service;
pub mod supervision;
pub mod training;

pub use error::{Error, Result};
