//! Online signature verification with self-taught sparse-autoencoder
//! features.
//!
//! The pipeline: raw tablet captures are smoothed, rotation- and
//! size-normalized and drawn into a two-channel (pressure, time) image
//! ([`preprocess`]). A sparse autoencoder learned on random whitened patches
//! of an unlabeled corpus ([`featurelearn`]) is convolved over each image and
//! mean-pooled into a fixed-length vector ([`features`]). Each user is
//! enrolled as a one-class Gaussian ([`verify`]), and [`eval`] measures
//! ROC/EER/AUC under a K-fold protocol.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod featurelearn;
pub mod features;
pub mod preprocess;
pub mod signature_io;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
