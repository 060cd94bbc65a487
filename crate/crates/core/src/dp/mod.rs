//! Differential privacy: gradient clipping and Gaussian perturbation,
//! subsampled-Gaussian moments accounting, moments division across parties,
//! the simple-division baseline and noise calibration.

pub mod accountant;
pub mod calibrate;
pub mod mechanism;

pub use accountant::{
    compose_parties, eps_from_moments, log_moment, moments_division_eps, simple_division_eps, step_moments,
    AccountantState, DivisionMethod, MomentMode, PartyBudget, PrivacyReport, DEFAULT_LAMBDA_MAX,
};
pub use calibrate::{
    calibrate_sigma, calibrate_sigma_parties, curve_csv, parties_eps, privacy_curve, shared_sigma_eps, CurveRow,
    CURVE_HEADER,
};
pub use mechanism::{clip_gradient, gaussian_perturb, ClipGranularity, DpHook};

use serde::{Deserialize, Serialize};

/// Privacy parameters of one party's private training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub sampling_prob: f64,
    pub delta: f64,
    pub seed: u64,
}

/// Accountant steps for `epochs` passes over `n` samples in batches of `b`.
pub fn steps_for_epochs(n: usize, batch_size: usize, epochs: usize) -> u64 {
    (epochs * n.div_ceil(batch_size.max(1))) as u64
}
