//! Moments accountant for the subsampled Gaussian mechanism.
//!
//! `α(λ)` is the log of the moment generating function of the privacy loss
//! at `λ`. For one step with sampling probability `q` and noise multiplier
//! `σ`, comparing `μ₀ = N(0, σ²)` with `μ = (1−q)·N(0, σ²) + q·N(1, σ²)`:
//!
//! - `E_{z∼μ}[(μ/μ₀)^λ] = E_{z∼μ₀}[(μ/μ₀)^{λ+1}]`, which has the closed form
//!   `Σ_{i=0}^{λ+1} C(λ+1, i) (1−q)^{λ+1−i} qⁱ exp(i(i−1)/(2σ²))`;
//! - `E_{z∼μ₀}[(μ₀/μ)^λ]`, integrated numerically.
//!
//! The exact mode takes the larger of the two. Log-moments add across steps
//! and across parties; `ε` follows from the tail bound
//! `ε = min_λ (α(λ) + ln(1/δ)) / λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_MAX: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    Exact,
    /// `q²λ(λ+1) / ((1−q)σ²)`, valid only for `λ ≤ σ² ln(1/(qσ))`; moments
    /// above that cap are treated as unbounded.
    Lemma1Bound,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_step(q: f64, sigma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidInput(format!(
            "sampling probability must lie in [0, 1), got {q}"
        )));
    }
    if !(sigma >= 0.0) || sigma.is_infinite() {
        return Err(Error::InvalidInput(format!(
            "noise multiplier must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 && q > 0.0 {
        return Err(Error::InfinitePrivacyLoss);
    }
    Ok(())
}

/// `ln E_{μ₀}[(μ/μ₀)^order]` via the binomial expansion, in log space.
fn log_binomial_moment(q: f64, sigma: f64, order: u32) -> f64 {
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let two_s2 = 2.0 * sigma * sigma;
    let n = order as f64;
    let mut ln_choose = 0.0;
    let mut acc = f64::NEG_INFINITY;
    for i in 0..=order {
        if i > 0 {
            let fi = i as f64;
            ln_choose += (n - fi + 1.0).ln() - fi.ln();
        }
        let fi = i as f64;
        let term = ln_choose + (n - fi) * ln_1mq + fi * ln_q + fi * (fi - 1.0) / two_s2;
        acc = log_add_exp(acc, term);
    }
    acc
}

/// Adaptive Simpson on `[a, b]`, seeded with `panels` equal panels.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + h * p as f64;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            recurse(
                f,
                lo,
                hi,
                fa,
                fm,
                fb,
                simpson(fa, fm, fb, hi - lo),
                tol / panels as f64,
                24,
            )
        })
        .sum()
}

const QUADRATURE_PANELS: usize = 512;

/// `ln E_{z∼μ₀}[(μ₀/μ)^λ]` by quadrature in units of `σ`.
///
/// `μ(z)/μ₀(z) = (1−q) + q·exp((2z−1)/(2σ²))`, so with `z = σt` the
/// integrand is `φ(t)·ratio^{−λ}`. The ratio is bounded below by `1−q`, so
/// `|t| ≤ 40` captures everything representable.
fn log_reverse_moment(q: f64, sigma: f64, lambda: u32) -> f64 {
    let ln_1mq = (-q).ln_1p();
    let ln_q = q.ln();
    let lam = lambda as f64;
    let ln_sqrt_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    // Scale out the largest possible magnitude, (1−q)^{−λ}, to keep values O(1).
    let shift = -lam * ln_1mq;
    let integrand = |t: f64| {
        let z = sigma * t;
        let ln_ratio = log_add_exp(ln_1mq, ln_q + (2.0 * z - 1.0) / (2.0 * sigma * sigma));
        (-0.5 * t * t - ln_sqrt_2pi - lam * ln_ratio - shift).exp()
    };
    let value = integrate(&integrand, -40.0, 40.0, QUADRATURE_PANELS, 1e-14);
    value.ln() + shift
}

/// Log-moment `α(λ)` of a single subsampled-Gaussian step.
pub fn log_moment(q: f64, sigma: f64, lambda: u32, mode: MomentMode) -> Result<f64> {
    check_step(q, sigma)?;
    if lambda == 0 || q == 0.0 {
        return Ok(0.0);
    }
    let lam = lambda as f64;
    match mode {
        MomentMode::Lemma1Bound => {
            let cap = sigma * sigma * (1.0 / (q * sigma)).ln();
            if lam > cap {
                return Ok(f64::INFINITY);
            }
            Ok(q * q * lam * (lam + 1.0) / ((1.0 - q) * sigma * sigma))
        }
        MomentMode::Exact => {
            let forward = log_binomial_moment(q, sigma, lambda + 1);
            let reverse = log_reverse_moment(q, sigma, lambda);
            // α(λ) ≥ 0 always (Jensen); clamp rounding noise
            Ok(forward.max(reverse).max(0.0))
        }
    }
}

/// `α(λ)` for every `λ` in `1..=lambda_max`.
pub fn step_moments(q: f64, sigma: f64, lambda_max: u32, mode: MomentMode) -> Result<Vec<f64>> {
    (1..=lambda_max).map(|l| log_moment(q, sigma, l, mode)).collect()
}

/// Accumulated log-moments on the grid `λ = 1..=lambda_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantState {
    log_moments: Vec<f64>,
    mode: MomentMode,
}

impl AccountantState {
    pub fn new(mode: MomentMode) -> Self {
        Self::with_lambda_max(mode, DEFAULT_LAMBDA_MAX)
    }

    pub fn with_lambda_max(mode: MomentMode, lambda_max: u32) -> Self {
        Self {
            log_moments: vec![0.0; lambda_max as usize],
            mode,
        }
    }

    pub fn mode(&self) -> MomentMode {
        self.mode
    }

    pub fn lambda_max(&self) -> u32 {
        self.log_moments.len() as u32
    }

    /// `log_moments()[i]` is `α(i + 1)`.
    pub fn log_moments(&self) -> &[f64] {
        &self.log_moments
    }

    /// Adds `steps` identical subsampled-Gaussian steps.
    pub fn accumulate(&mut self, q: f64, sigma: f64, steps: u64) -> Result<()> {
        check_step(q, sigma)?;
        if steps == 0 {
            return Ok(());
        }
        let per_step = step_moments(q, sigma, self.lambda_max(), self.mode)?;
        self.add_scaled(&per_step, steps);
        Ok(())
    }

    /// Adds `steps · per_step[λ]` to each entry; `per_step` must come from
    /// [`step_moments`] with this state's grid and mode.
    pub fn add_scaled(&mut self, per_step: &[f64], steps: u64) {
        if steps == 0 {
            return;
        }
        for (acc, m) in self.log_moments.iter_mut().zip(per_step) {
            *acc += steps as f64 * m;
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.mode != other.mode {
            return Err(Error::Config(format!(
                "cannot compose accountants in {:?} and {:?} mode",
                self.mode, other.mode
            )));
        }
        if self.log_moments.len() != other.log_moments.len() {
            return Err(Error::Config(format!(
                "cannot compose accountants with lambda grids 1..{} and 1..{}",
                self.log_moments.len(),
                other.log_moments.len()
            )));
        }
        Ok(())
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            log_moments: self
                .log_moments
                .iter()
                .zip(&other.log_moments)
                .map(|(a, b)| a + b)
                .collect(),
            mode: self.mode,
        })
    }
}

/// Moments division: sums every party's log-moments element-wise.
pub fn compose_parties(states: &[AccountantState]) -> Result<AccountantState> {
    let (first, rest) = states
        .split_first()
        .ok_or_else(|| Error::InvalidInput("compose_parties needs at least one state".into()))?;
    rest.iter().try_fold(first.clone(), |acc, s| acc.compose(s))
}

/// `ε = min_λ (α(λ) + ln(1/δ)) / λ`; unbounded moments are skipped.
pub fn eps_from_moments(state: &AccountantState, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if state.log_moments.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    let ln_inv_delta = -delta.ln();
    let eps = state
        .log_moments
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_finite())
        .map(|(i, a)| (a + ln_inv_delta) / (i + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    if eps.is_infinite() {
        return Err(Error::InvalidInput("no finite moment on the lambda grid".into()));
    }
    Ok(eps)
}

/// One party's training: `steps` draws at sampling probability `q`, noise `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyBudget {
    pub party: usize,
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisionMethod {
    MomentsDivision,
    SimpleDivision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub method: DivisionMethod,
    pub per_party: Vec<PartyBudget>,
}

fn party_state(p: &PartyBudget, mode: MomentMode, lambda_max: u32) -> Result<AccountantState> {
    let mut s = AccountantState::with_lambda_max(mode, lambda_max);
    s.accumulate(p.q, p.sigma, p.steps)?;
    Ok(s)
}

/// Cross-party ε by summing log-moments over all parties' steps.
pub fn moments_division_eps(parties: &[PartyBudget], delta: f64, mode: MomentMode) -> Result<PrivacyReport> {
    let states = parties
        .iter()
        .map(|p| party_state(p, mode, DEFAULT_LAMBDA_MAX))
        .collect::<Result<Vec<_>>>()?;
    let total = compose_parties(&states)?;
    Ok(PrivacyReport {
        epsilon: eps_from_moments(&total, delta)?,
        delta,
        method: DivisionMethod::MomentsDivision,
        per_party: parties.to_vec(),
    })
}

/// Baseline: each of the `k` parties gets `δ/k`, runs its own accountant,
/// and the per-party `ε_j` are summed.
pub fn simple_division_eps(parties: &[PartyBudget], delta: f64, mode: MomentMode) -> Result<PrivacyReport> {
    if parties.is_empty() {
        return Err(Error::InvalidInput("simple division needs at least one party".into()));
    }
    let share = delta / parties.len() as f64;
    let mut epsilon = 0.0;
    for p in parties {
        epsilon += eps_from_moments(&party_state(p, mode, DEFAULT_LAMBDA_MAX)?, share)?;
    }
    Ok(PrivacyReport {
        epsilon,
        delta,
        method: DivisionMethod::SimpleDivision,
        per_party: parties.to_vec(),
    })
}
