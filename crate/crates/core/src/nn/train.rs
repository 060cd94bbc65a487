//! Mini-batch gradient steps shared by every training loop in the crate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{loss_sum_and_row_grads, loss_with_output, LossKind};
use super::mlp::{backprop_deltas, mlp_backward, mlp_forward, per_row_grads, ModelParams};
use super::optim::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::dp::DpHook;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

/// Shuffles `0..n` once and cuts it into batches; the last partial batch is
/// kept.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Per-row gradients of each row's own loss. Their mean is the gradient of
/// the mean batch loss.
pub fn per_example_grads(
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &DenseMatrix,
    kind: LossKind,
) -> Result<Vec<ModelParams>> {
    if x.rows() != targets.rows() {
        return Err(Error::dim("per_example_grads rows", x.rows(), targets.rows()));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidInput("per_example_grads on an empty batch".into()));
    }
    let acts = mlp_forward(params, x)?;
    let (_, row_grads) = loss_sum_and_row_grads(kind, params.spec().output_activation(), &acts.output, targets)?;
    let (deltas, _) = backprop_deltas(params, &acts, &row_grads)?;
    Ok(per_row_grads(params, &acts, &deltas))
}

/// Gradient of the mean batch loss computed as `(Σ_i g_i) / b`, summing rows
/// in order. The DP path with infinite clip norm and no noise reproduces it
/// bit for bit.
pub fn batch_gradient(
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &DenseMatrix,
    kind: LossKind,
) -> Result<(f64, ModelParams)> {
    if x.rows() != targets.rows() {
        return Err(Error::dim("batch_gradient rows", x.rows(), targets.rows()));
    }
    let acts = mlp_forward(params, x)?;
    let (loss_sum, row_grads) = loss_sum_and_row_grads(kind, params.spec().output_activation(), &acts.output, targets)?;
    let (mut grads, _) = mlp_backward(params, &acts, &row_grads)?;
    let b = x.rows() as f64;
    grads.div_scalar(b);
    Ok((loss_sum / b, grads))
}

/// The gradient actually applied for one batch: plain, or privatized when a
/// DP hook is present.
pub fn step_gradient(
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &DenseMatrix,
    kind: LossKind,
    hook: Option<&mut DpHook>,
) -> Result<ModelParams> {
    match hook {
        None => Ok(batch_gradient(params, x, targets, kind)?.1),
        Some(hook) if hook.clips_per_example() => {
            let per = per_example_grads(params, x, targets, kind)?;
            hook.privatize_per_example(&per)
        }
        Some(hook) => {
            let (_, g) = batch_gradient(params, x, targets, kind)?;
            hook.privatize_batch(g)
        }
    }
}

/// Mean loss of the model over the full dataset.
pub fn evaluate_loss(params: &ModelParams, x: &DenseMatrix, targets: &DenseMatrix, kind: LossKind) -> Result<f64> {
    let acts = mlp_forward(params, x)?;
    Ok(loss_with_output(kind, params.spec().output_activation(), &acts.output, targets)?.0)
}

/// Supervised mini-batch training. Returns the full-data loss after each
/// epoch.
pub fn fit(
    params: &mut ModelParams,
    x: &DenseMatrix,
    targets: &DenseMatrix,
    kind: LossKind,
    cfg: &TrainConfig,
    shuffle_rng: &mut Rng,
    mut hook: Option<&mut DpHook>,
) -> Result<Vec<f64>> {
    if x.rows() != targets.rows() {
        return Err(Error::dim("fit rows", x.rows(), targets.rows()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut opt = OptimizerState::new(cfg.optimizer, params)?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for batch in epoch_batches(x.rows(), cfg.batch_size, shuffle_rng) {
            let xb = x.select_rows(&batch);
            let yb = targets.select_rows(&batch);
            let g = step_gradient(params, &xb, &yb, kind, hook.as_deref_mut())?;
            optimizer_step(params, &g, &mut opt)?;
        }
        trace.push(evaluate_loss(params, x, targets, kind)?);
    }
    Ok(trace)
}
