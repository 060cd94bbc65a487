//! Solo (one party's features) and Combine (all features, centrally).

use super::{task_loss, PartitionedDataset};
use crate::data::{label_targets, metric, Task};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{fit, predict, MlpSpec, ModelParams, OutputActivation, TrainConfig};
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedModel {
    pub params: ModelParams,
    pub task: Task,
    /// Training loss after each epoch.
    pub trace: Vec<f64>,
}

impl SupervisedModel {
    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        predict(&self.params, x)
    }

    pub fn metric(&self, x: &DenseMatrix, labels: &[f64]) -> Result<f64> {
        metric(self.task, &self.predict(x)?, labels)
    }
}

/// Plain MLP training with relu hidden layers and a task-appropriate head.
pub fn train_supervised(
    x: &DenseMatrix,
    labels: &[f64],
    task: Task,
    hidden: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SupervisedModel> {
    if x.rows() != labels.len() {
        return Err(Error::dim("train_supervised labels", x.rows(), labels.len()));
    }
    let spec = MlpSpec::relu(x.cols(), hidden, task.output_width(), OutputActivation::Identity)?;
    let mut params = spec.init(&mut rng_for(seed, stream::INIT));
    let targets = label_targets(labels, task)?;
    let trace = fit(
        &mut params,
        x,
        &targets,
        task_loss(task),
        cfg,
        &mut rng_for(seed, stream::SHUFFLE),
        None,
    )?;
    Ok(SupervisedModel { params, task, trace })
}

/// Trains on party `party`'s features alone (the host's labels are assumed
/// available, as in the usual Solo comparison).
pub fn train_solo(
    data: &PartitionedDataset,
    party: usize,
    hidden: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SupervisedModel> {
    let x = data
        .parties
        .get(party)
        .ok_or_else(|| Error::InvalidInput(format!("no party {party}")))?;
    train_supervised(x, data.labels()?, data.task, hidden, cfg, seed)
}

/// Trains on all parties' features concatenated in party order.
pub fn train_combine(
    data: &PartitionedDataset,
    hidden: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SupervisedModel> {
    train_supervised(&data.combined()?, data.labels()?, data.task, hidden, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, partition_features, PartitionSpec, SyntheticSpec};
    use crate::nn::OptimizerConfig;

    #[test]
    fn combine_on_one_party_is_solo() {
        let (ds, _) = make_synthetic(&SyntheticSpec::new(40, 6, 2, 5)).unwrap();
        let one = partition_features(
            &ds,
            &PartitionSpec::Equal {
                k: 1,
                shuffle: false,
                seed: 0,
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            optimizer: OptimizerConfig::adam(0.01),
        };
        let a = train_combine(&one, &[4], &cfg, 3).unwrap();
        let b = train_solo(&one, 0, &[4], &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(train_solo(&one, 1, &[4], &cfg, 3).is_err());
    }
}
