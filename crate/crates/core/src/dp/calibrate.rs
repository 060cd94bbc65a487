use serde::{Deserialize, Serialize};

use super::accountant::{eps_from_moments, step_moments, AccountantState, MomentMode, DEFAULT_LAMBDA_MAX};
use crate::error::{Error, Result};
use crate::table::format_sig;

pub const SIGMA_UPPER_BOUND: f64 = 1e6;
const RELATIVE_TOLERANCE: f64 = 1e-3;

/// Moments-division ε for parties sharing `q` and `σ`, with per-party step
/// counts `steps`.
pub fn shared_sigma_eps(q: f64, sigma: f64, steps: &[u64], delta: f64) -> Result<f64> {
    let per_step = step_moments(q, sigma, DEFAULT_LAMBDA_MAX, MomentMode::Exact)?;
    let mut state = AccountantState::new(MomentMode::Exact);
    state.add_scaled(&per_step, steps.iter().sum());
    eps_from_moments(&state, delta)
}

/// Smallest noise multiplier (to a relative tolerance of 1e-3) whose
/// moments-division ε over all parties is at most `target_eps`.
///
/// Returns `σ*` with `ε(σ*) ≤ target` and `ε(σ*/(1 + 1e-3)) > target`.
pub fn calibrate_sigma(target_eps: f64, delta: f64, q: f64, steps_per_party: &[u64]) -> Result<f64> {
    let parties: Vec<(f64, u64)> = steps_per_party.iter().map(|&s| (q, s)).collect();
    calibrate_sigma_parties(target_eps, delta, &parties)
}

/// Moments-division ε when every party uses noise multiplier `σ` with its
/// own `(q, steps)`.
pub fn parties_eps(sigma: f64, parties: &[(f64, u64)], delta: f64) -> Result<f64> {
    let mut state = AccountantState::new(MomentMode::Exact);
    for &(q, steps) in parties {
        state.add_scaled(&step_moments(q, sigma, DEFAULT_LAMBDA_MAX, MomentMode::Exact)?, steps);
    }
    eps_from_moments(&state, delta)
}

/// [`calibrate_sigma`] for parties with differing sampling probabilities.
pub fn calibrate_sigma_parties(target_eps: f64, delta: f64, parties: &[(f64, u64)]) -> Result<f64> {
    if !(target_eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target epsilon must be > 0, got {target_eps}"
        )));
    }
    if parties.is_empty() {
        return Err(Error::InvalidInput("calibrate_sigma needs at least one party".into()));
    }
    let eps = |sigma: f64| parties_eps(sigma, parties, delta);

    let mut hi = 1.0;
    while eps(hi)? > target_eps {
        hi *= 2.0;
        if hi > SIGMA_UPPER_BOUND {
            return Err(Error::Calibration(format!(
                "epsilon {target_eps} unreachable with sigma <= {SIGMA_UPPER_BOUND:e}"
            )));
        }
    }
    let mut lo = hi / 2.0;
    while eps(lo)? <= target_eps {
        hi = lo;
        lo /= 2.0;
    }
    while (hi - lo) / hi > RELATIVE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if eps(mid)? <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub k: usize,
    pub eps_moments: f64,
    pub eps_simple: f64,
}

/// ε under moments division and simple division for `k` identical parties,
/// each taking `steps` steps at `(q, σ)`, for every `k` in `k_range`.
pub fn privacy_curve(q: f64, sigma: f64, steps: u64, delta: f64, k_range: &[usize]) -> Result<Vec<CurveRow>> {
    if k_range.is_empty() {
        return Err(Error::InvalidInput("privacy curve needs at least one k".into()));
    }
    if k_range.contains(&0) {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let per_step = step_moments(q, sigma, DEFAULT_LAMBDA_MAX, MomentMode::Exact)?;
    let mut party = AccountantState::new(MomentMode::Exact);
    party.add_scaled(&per_step, steps);
    k_range
        .iter()
        .map(|&k| {
            let mut all = AccountantState::new(MomentMode::Exact);
            for _ in 0..k {
                all = all.compose(&party)?;
            }
            let eps_moments = eps_from_moments(&all, delta)?;
            let eps_simple = k as f64 * eps_from_moments(&party, delta / k as f64)?;
            Ok(CurveRow {
                k,
                eps_moments,
                eps_simple,
            })
        })
        .collect()
}

pub const CURVE_HEADER: &str = "k,eps_moments,eps_simple";

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.k,
            format_sig(r.eps_moments, 10),
            format_sig(r.eps_simple, 10)
        ));
    }
    out
}
