use serde::{Deserialize, Serialize};

use super::targets::{init_targets, nat_loss, TargetSet};
use crate::dp::DpHook;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::train::{epoch_batches, step_gradient};
use crate::nn::{predict, LossKind, MlpSpec, ModelParams, OptimizerConfig, OptimizerState};
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NatConfig {
    pub repr_dim: usize,
    /// Epochs between assignment refreshes.
    pub update_freq: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl NatConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.repr_dim == 0 {
            return Err(Error::Config("representation dimension must be >= 1".into()));
        }
        if self.update_freq == 0 {
            return Err(Error::Config("assignment update frequency must be >= 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::Config(format!(
                "batch size must lie in [1, {n}], got {}",
                self.batch_size
            )));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone)]
pub struct NatOutcome {
    pub params: ModelParams,
    pub targets: TargetSet,
    /// Full-data NAT loss before training, then after every epoch.
    pub loss_trace: Vec<f64>,
}

fn full_loss(params: &ModelParams, x: &DenseMatrix, targets: &TargetSet) -> Result<f64> {
    let all: Vec<usize> = (0..x.rows()).collect();
    nat_loss(&predict(params, x)?, &targets.assigned_targets(&all))
}

/// Trains `f_θ` to map each sample onto its assigned random target. Every
/// `update_freq` epochs (starting with the first) each batch's targets are
/// re-dealt by the Hungarian method before its gradient step.
pub fn nat_train(x: &DenseMatrix, spec: &MlpSpec, cfg: &NatConfig, mut dp: Option<&mut DpHook>) -> Result<NatOutcome> {
    let n = x.rows();
    cfg.validate(n)?;
    if spec.output_size() != cfg.repr_dim {
        return Err(Error::dim("nat_train output size", cfg.repr_dim, spec.output_size()));
    }
    if spec.input_size() != x.cols() {
        return Err(Error::dim("nat_train input size", x.cols(), spec.input_size()));
    }
    let mut params = spec.init(&mut rng_for(cfg.seed, stream::INIT));
    let mut targets = init_targets(n, cfg.repr_dim, cfg.seed)?;
    let mut shuffle = rng_for(cfg.seed, stream::SHUFFLE);
    let mut opt = OptimizerState::new(cfg.optimizer, &params)?;

    let mut loss_trace = Vec::with_capacity(cfg.epochs + 1);
    loss_trace.push(full_loss(&params, x, &targets)?);
    for epoch in 0..cfg.epochs {
        let refresh = epoch % cfg.update_freq == 0;
        for batch in epoch_batches(n, cfg.batch_size, &mut shuffle) {
            let xb = x.select_rows(&batch);
            if refresh {
                let reprs = predict(&params, &xb)?;
                targets.reassign_batch(&batch, &reprs)?;
            }
            let tb = targets.assigned_targets(&batch);
            let g = step_gradient(&params, &xb, &tb, LossKind::Mse, dp.as_deref_mut())?;
            crate::nn::optimizer_step(&mut params, &g, &mut opt)?;
        }
        loss_trace.push(full_loss(&params, x, &targets)?);
    }
    Ok(NatOutcome {
        params,
        targets,
        loss_trace,
    })
}

/// `R = f_θ(x)`: a plain forward pass, no noise.
pub fn extract_representation(params: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    predict(params, x)
}
