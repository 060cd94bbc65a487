//! Central finite differences over the mean loss, independent of backprop.

use super::loss::{loss_with_output, LossKind};
use super::mlp::{predict, ModelParams};
use crate::error::Result;
use crate::matrix::DenseMatrix;

fn mean_loss(params: &ModelParams, x: &DenseMatrix, target: &DenseMatrix, kind: LossKind) -> Result<f64> {
    let pred = predict(params, x)?;
    Ok(loss_with_output(kind, params.spec().output_activation(), &pred, target)?.0)
}

/// Gradient of the mean loss by `(L(p+h) − L(p−h)) / 2h` per coordinate.
pub fn finite_difference_grads(
    params: &ModelParams,
    x: &DenseMatrix,
    target: &DenseMatrix,
    kind: LossKind,
    h: f64,
) -> Result<ModelParams> {
    let base = params.to_flat();
    let mut out = Vec::with_capacity(base.len());
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + h;
        let plus = mean_loss(&ModelParams::from_flat(params.spec(), &probe)?, x, target, kind)?;
        probe[i] = base[i] - h;
        let minus = mean_loss(&ModelParams::from_flat(params.spec(), &probe)?, x, target, kind)?;
        probe[i] = base[i];
        out.push((plus - minus) / (2.0 * h));
    }
    ModelParams::from_flat(params.spec(), &out)
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_relative_error(a: &ModelParams, b: &ModelParams, floor: f64) -> f64 {
    a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
