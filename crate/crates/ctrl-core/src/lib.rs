//! Cross-modal temporal localization of activities in untrimmed videos.
//!
//! Given a sentence embedding and sliding-window clip features, the crate
//! trains a model that scores clip/query alignment and regresses temporal
//! boundaries, then evaluates it with recall-at-n / IoU metrics. Everything
//! runs on a small self-contained f64 reverse-mode autodiff substrate, so
//! the whole pipeline is deterministic and checkable by finite differences.
//!
//! Module map:
//! - [`autograd`]: tensors, the op tape, Adam, gradient checking, checkpoints
//! - [`geometry`]: interval IoU/nIoL, sliding windows, offset codecs, NMS
//! - [`data`]: annotation/feature I/O, sample assignment, synthetic datasets
//! - [`model`]: the encoder/fusion/head network and its loss functions
//! - [`trainer`]: the training loop and gradient audit
//! - [`eval`]: localization, recall metrics, complex-query fusion, detection
//! - [`annotate`]: sentence decomposition and keyword-matched annotation
//! - [`config`]: the key=value config-file dialect shared with the CLI

pub mod annotate;
pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
