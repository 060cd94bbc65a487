//! One-shot vertical federated learning simulator.
//!
//! Guest parties learn unsupervised representations of their private feature
//! blocks (noise-as-targets or PCA) and ship them to the label-holding host
//! exactly once. The host then trains an aggregation network over its own
//! features plus the received representations. An optional differentially
//! private mode clips and perturbs every gradient step, and the resulting
//! cross-party privacy loss is tracked with a moments accountant.
//!
//! Module map:
//!
//! - [`matrix`]: the dense row-major matrix used everywhere.
//! - [`nn`]: MLP forward/backward, losses, optimizers, per-example gradients.
//! - [`nat`]: noise-as-targets training, Hungarian assignment, PCA.
//! - [`dp`]: clipping, Gaussian noise, log-moments accounting, calibration.
//! - [`fed`]: party orchestration, baselines, communication ledger, model files.
//! - [`data`]: loaders, normalization, partitioning, synthetic data, splits.
//! - [`experiment`]: config-driven experiment runner behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dp;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod matrix;
pub mod nat;
pub mod nn;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
