//! Split learning: guests run bottom networks, the host a top network, and
//! activations/gradients cross the party boundary every batch. Multi-round
//! fine-tuning reuses the engine starting from a one-shot model.

use super::config::SplitConfig;
use super::fedonce::{party_seed, FedModel, GuestModel};
use super::ledger::{CommLedger, PayloadKind, Phase};
use super::{task_loss, PartitionedDataset};
use crate::data::{label_targets, metric};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::loss::loss_sum_and_row_grads;
use crate::nn::train::epoch_batches;
use crate::nn::{
    loss_with_output, mlp_backward, mlp_forward, optimizer_step, predict, LossKind, MlpSpec, ModelParams,
    OptimizerState, OutputActivation,
};
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel {
    /// Bottom networks of parties `1..k`.
    pub guests: Vec<ModelParams>,
    pub host: ModelParams,
    pub repr_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub epoch: usize,
    /// Cumulative bytes exchanged when this point was measured.
    pub bytes: u64,
    /// Training loss over the full training set.
    pub loss: f64,
    /// Test metric when a test set was given, else the training metric.
    pub metric: f64,
}

struct Engine {
    model: SplitModel,
    guest_opts: Vec<OptimizerState>,
    host_opt: OptimizerState,
}

impl Engine {
    fn new(model: SplitModel, cfg: &SplitConfig) -> Result<Self> {
        let guest_opts = model
            .guests
            .iter()
            .map(|g| OptimizerState::new(cfg.optimizer, g))
            .collect::<Result<_>>()?;
        let host_opt = OptimizerState::new(cfg.optimizer, &model.host)?;
        Ok(Self {
            model,
            guest_opts,
            host_opt,
        })
    }

    fn output(&self, data: &PartitionedDataset) -> Result<DenseMatrix> {
        let mut blocks = vec![data.parties[0].clone()];
        for (j, g) in self.model.guests.iter().enumerate() {
            blocks.push(predict(g, &data.parties[j + 1])?);
        }
        predict(
            &self.model.host,
            &DenseMatrix::hstack(&blocks.iter().collect::<Vec<_>>())?,
        )
    }

    fn loss(&self, data: &PartitionedDataset, targets: &DenseMatrix, kind: LossKind) -> Result<f64> {
        Ok(loss_with_output(kind, OutputActivation::Identity, &self.output(data)?, targets)?.0)
    }

    fn metric(&self, data: &PartitionedDataset) -> Result<f64> {
        metric(data.task, &self.output(data)?, data.labels()?)
    }

    fn step(
        &mut self,
        data: &PartitionedDataset,
        targets: &DenseMatrix,
        kind: LossKind,
        batch: &[usize],
        ledger: &mut CommLedger,
        phase: Phase,
    ) -> Result<()> {
        let b = batch.len();
        let d = self.model.repr_dim;
        let mut guest_acts = Vec::with_capacity(self.model.guests.len());
        let mut blocks = vec![data.parties[0].select_rows(batch)];
        for (i, g) in self.model.guests.iter().enumerate() {
            let acts = mlp_forward(g, &data.parties[i + 1].select_rows(batch))?;
            ledger.record(phase, i + 1, 0, PayloadKind::ForwardActivation, (b * d) as u64);
            blocks.push(acts.output.clone());
            guest_acts.push(acts);
        }
        let z = DenseMatrix::hstack(&blocks.iter().collect::<Vec<_>>())?;
        let host_acts = mlp_forward(&self.model.host, &z)?;
        let yb = targets.select_rows(batch);
        let (_, d_out) = loss_sum_and_row_grads(kind, OutputActivation::Identity, &host_acts.output, &yb)?;
        let (mut host_grad, d_in) = mlp_backward(&self.model.host, &host_acts, &d_out)?;
        host_grad.div_scalar(b as f64);

        let mut widths = vec![data.parties[0].cols()];
        widths.extend(std::iter::repeat_n(d, self.model.guests.len()));
        let slices = d_in.hsplit(&widths)?;
        for (i, (g, acts)) in self.model.guests.iter_mut().zip(&guest_acts).enumerate() {
            ledger.record(phase, 0, i + 1, PayloadKind::BackwardGradient, (b * d) as u64);
            let (mut grad, _) = mlp_backward(g, acts, &slices[i + 1])?;
            grad.div_scalar(b as f64);
            optimizer_step(g, &grad, &mut self.guest_opts[i])?;
        }
        optimizer_step(&mut self.model.host, &host_grad, &mut self.host_opt)
    }

    /// Runs `epochs` passes, recording a trace point after each, plus one
    /// for the starting state at `start_bytes`.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        train: &PartitionedDataset,
        test: Option<&PartitionedDataset>,
        cfg: &SplitConfig,
        shuffle_stream: u64,
        start_bytes: u64,
        ledger: &mut CommLedger,
        phase: Phase,
    ) -> Result<Vec<TracePoint>> {
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let targets = label_targets(train.labels()?, train.task)?;
        let kind = task_loss(train.task);
        let eval = test.unwrap_or(train);
        let mut rng = rng_for(cfg.seed, shuffle_stream);
        let mut trace = vec![TracePoint {
            epoch: 0,
            bytes: start_bytes + ledger.total_bytes(),
            loss: self.loss(train, &targets, kind)?,
            metric: self.metric(eval)?,
        }];
        for epoch in 1..=cfg.epochs {
            for batch in epoch_batches(train.n(), cfg.batch_size, &mut rng) {
                self.step(train, &targets, kind, &batch, ledger, phase)?;
            }
            trace.push(TracePoint {
                epoch,
                bytes: start_bytes + ledger.total_bytes(),
                loss: self.loss(train, &targets, kind)?,
                metric: self.metric(eval)?,
            });
        }
        Ok(trace)
    }
}

fn check_split_data(train: &PartitionedDataset, test: Option<&PartitionedDataset>) -> Result<()> {
    train.validate()?;
    train.labels()?;
    if train.k() < 2 {
        return Err(Error::Config(format!(
            "split learning needs k >= 2 parties, got {}",
            train.k()
        )));
    }
    if let Some(t) = test {
        t.validate()?;
        t.labels()?;
        if t.widths() != train.widths() {
            return Err(Error::dim(
                "test party widths",
                format!("{:?}", train.widths()),
                format!("{:?}", t.widths()),
            ));
        }
    }
    Ok(())
}

/// SplitNN from random initialization with the FedOnce architecture.
/// Trace point 0 is the untrained network at zero bytes.
pub fn train_splitnn(
    train: &PartitionedDataset,
    test: Option<&PartitionedDataset>,
    guest_hidden: &[usize],
    repr_dim: usize,
    host_hidden: &[usize],
    cfg: &SplitConfig,
) -> Result<(SplitModel, CommLedger, Vec<TracePoint>)> {
    check_split_data(train, test)?;
    let k = train.k();
    let guests = (1..k)
        .map(|j| {
            let spec = MlpSpec::relu(
                train.parties[j].cols(),
                guest_hidden,
                repr_dim,
                OutputActivation::Identity,
            )?;
            Ok(spec.init(&mut rng_for(party_seed(cfg.seed, j), stream::INIT)))
        })
        .collect::<Result<Vec<_>>>()?;
    let host_in = train.parties[0].cols() + (k - 1) * repr_dim;
    let host_spec = MlpSpec::relu(
        host_in,
        host_hidden,
        train.task.output_width(),
        OutputActivation::Identity,
    )?;
    let host = host_spec.init(&mut rng_for(party_seed(cfg.seed, 0), stream::INIT));
    let mut engine = Engine::new(SplitModel { guests, host, repr_dim }, cfg)?;
    let mut ledger = CommLedger::new();
    let trace = engine.run(train, test, cfg, stream::SHUFFLE, 0, &mut ledger, Phase::Splitnn)?;
    Ok((engine.model, ledger, trace))
}

/// Continues training a one-shot model end to end for `cfg.epochs` rounds.
/// Point 0 is the input model at the one-shot byte count.
pub fn finetune_multiround(
    model: &FedModel,
    train: &PartitionedDataset,
    test: Option<&PartitionedDataset>,
    cfg: &SplitConfig,
) -> Result<(FedModel, CommLedger, Vec<TracePoint>)> {
    check_split_data(train, test)?;
    if model.repr_noise != 0.0 || !model.laggy.is_empty() {
        return Err(Error::Config(
            "fine-tuning needs a model trained without representation noise or laggy parties".into(),
        ));
    }
    let guests = model
        .guests
        .iter()
        .map(|g| match g {
            GuestModel::Nat(p) => Ok(p.clone()),
            GuestModel::Pca(_) => Err(Error::Config("PCA guests cannot be fine-tuned".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    let one_shot = ((train.k() - 1) * train.n() * model.repr_dim * 8) as u64;
    let mut engine = Engine::new(
        SplitModel {
            guests,
            host: model.host.clone(),
            repr_dim: model.repr_dim,
        },
        cfg,
    )?;
    if engine.model.host.spec().input_size() != train.parties[0].cols() + (train.k() - 1) * model.repr_dim {
        return Err(Error::dim(
            "host input size",
            engine.model.host.spec().input_size(),
            train.widths()[0],
        ));
    }
    let mut ledger = CommLedger::new();
    let trace = engine.run(
        train,
        test,
        cfg,
        stream::FINETUNE,
        one_shot,
        &mut ledger,
        Phase::Finetune,
    )?;
    let tuned = FedModel {
        guests: engine.model.guests.into_iter().map(GuestModel::Nat).collect(),
        host: engine.model.host,
        ..model.clone()
    };
    Ok((tuned, ledger, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, partition_features, SyntheticSpec};
    use crate::nn::OptimizerConfig;

    fn data(k: usize) -> PartitionedDataset {
        let (ds, part) = make_synthetic(&SyntheticSpec::new(50, 4 * k, k, 2)).unwrap();
        partition_features(&ds, &part).unwrap()
    }

    #[test]
    fn epoch_bytes_closed_form() {
        for k in [2, 3] {
            let d = data(k);
            let cfg = SplitConfig {
                epochs: 2,
                batch_size: 16,
                optimizer: OptimizerConfig::sgd(0.1),
                seed: 1,
            };
            let (_, ledger, trace) = train_splitnn(&d, None, &[4], 3, &[4], &cfg).unwrap();
            let per_epoch = 2 * (k as u64 - 1) * 50 * 3 * 8;
            assert_eq!(
                trace.iter().map(|t| t.bytes).collect::<Vec<_>>(),
                vec![0, per_epoch, 2 * per_epoch]
            );
            assert_eq!(ledger.total_bytes(), 2 * per_epoch);
        }
    }

    #[test]
    fn zero_epochs_is_initial_point() {
        let cfg = SplitConfig {
            epochs: 0,
            batch_size: 8,
            optimizer: OptimizerConfig::sgd(0.1),
            seed: 0,
        };
        let (_, ledger, trace) = train_splitnn(&data(2), None, &[], 2, &[], &cfg).unwrap();
        assert!(ledger.is_empty());
        assert_eq!(trace.len(), 1);
    }
}
