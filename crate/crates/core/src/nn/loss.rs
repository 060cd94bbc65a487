use serde::{Deserialize, Serialize};

use super::mlp::{softmax_rows, OutputActivation};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(1/2n)·‖pred − target‖²_F`
    Mse,
    /// Mean cross-entropy against one-hot targets. `pred` holds logits and a
    /// stable softmax is applied internally.
    SoftmaxCrossEntropy,
}

const PROB_TOL: f64 = 1e-6;

fn check_shapes(pred: &DenseMatrix, target: &DenseMatrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "loss",
            format!("{:?}", pred.shape()),
            format!("{:?}", target.shape()),
        ));
    }
    if pred.rows() == 0 {
        return Err(Error::InvalidInput("loss over an empty batch".into()));
    }
    Ok(())
}

fn check_distribution_rows(m: &DenseMatrix, what: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&v| v < -PROB_TOL) || (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidInput(format!(
                "{what} row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// Summed loss and per-row gradients of each row's own loss (no `1/n`).
pub(crate) fn loss_sum_and_row_grads(
    kind: LossKind,
    output: OutputActivation,
    pred: &DenseMatrix,
    target: &DenseMatrix,
) -> Result<(f64, DenseMatrix)> {
    check_shapes(pred, target)?;
    match (kind, output) {
        (LossKind::Mse, OutputActivation::Softmax) => Err(Error::Config(
            "mse loss pairs with identity or sigmoid outputs, not softmax".into(),
        )),
        (LossKind::Mse, _) => {
            let grad = pred.sub(target)?;
            let loss = 0.5 * grad.frobenius_sq();
            Ok((loss, grad))
        }
        (LossKind::SoftmaxCrossEntropy, OutputActivation::Identity) => {
            check_distribution_rows(target, "cross-entropy target")?;
            let probs = softmax_rows(pred);
            let mut loss = 0.0;
            for r in 0..pred.rows() {
                let row = pred.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += target.row(r).iter().zip(row).map(|(t, z)| t * (lse - z)).sum::<f64>();
            }
            Ok((loss, probs.sub(target)?))
        }
        (LossKind::SoftmaxCrossEntropy, OutputActivation::Softmax) => {
            check_distribution_rows(target, "cross-entropy target")?;
            check_distribution_rows(pred, "softmax output")?;
            let mut loss = 0.0;
            let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
            for r in 0..pred.rows() {
                for c in 0..pred.cols() {
                    let t = target.get(r, c);
                    if t != 0.0 {
                        let p = pred.get(r, c).max(f64::MIN_POSITIVE);
                        loss -= t * p.ln();
                        grad.set(r, c, -t / p);
                    }
                }
            }
            Ok((loss, grad))
        }
        (LossKind::SoftmaxCrossEntropy, OutputActivation::Sigmoid) => Err(Error::Config(
            "softmax cross-entropy needs an identity (logit) or softmax output".into(),
        )),
    }
}

/// Mean loss over the batch rows and its gradient w.r.t. `pred`.
/// Cross-entropy treats `pred` as logits.
pub fn loss_and_grad(kind: LossKind, pred: &DenseMatrix, target: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    loss_with_output(kind, OutputActivation::Identity, pred, target)
}

/// Like [`loss_and_grad`] but aware of the network's output activation, so a
/// softmax head is scored on its probabilities.
pub fn loss_with_output(
    kind: LossKind,
    output: OutputActivation,
    pred: &DenseMatrix,
    target: &DenseMatrix,
) -> Result<(f64, DenseMatrix)> {
    let (sum, mut grad) = loss_sum_and_row_grads(kind, output, pred, target)?;
    let n = pred.rows() as f64;
    for g in grad.as_mut_slice() {
        *g /= n;
    }
    Ok((sum / n, grad))
}
