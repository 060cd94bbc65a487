//! Party orchestration: one-shot training and prediction, multi-round
//! fine-tuning, SplitNN and the Solo/Combine baselines, representation noise,
//! laggy parties and communication accounting.

pub mod baselines;
pub mod config;
pub mod fedonce;
pub mod ledger;
pub mod model_io;
pub mod splitnn;

pub use baselines::{train_combine, train_solo, train_supervised, SupervisedModel};
pub use config::{DpSettings, GuestConfig, GuestLearner, HostConfig, Mode, RunConfig, SplitConfig};
pub use fedonce::{
    add_representation_noise, apply_laggy, predict_fedonce, train_fedonce, FedModel, FedOnceOutcome, GuestModel,
};
pub use ledger::{CommLedger, LedgerEntry, PayloadKind, Phase, LEDGER_HEADER};
pub use model_io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use splitnn::{finetune_multiround, train_splitnn, SplitModel, TracePoint};

use crate::data::{label_targets, NormalizeScheme, Normalizer, RawDataset, Task};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::LossKind;

/// Row-aligned feature blocks, one per party. Party 0 is the host and the
/// only holder of labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    pub parties: Vec<DenseMatrix>,
    pub labels: Option<Vec<f64>>,
    pub task: Task,
    /// Source columns of each party's block.
    pub columns: Vec<Vec<usize>>,
}

impl PartitionedDataset {
    pub fn from_groups(ds: &RawDataset, groups: &[Vec<usize>]) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidInput("partition with zero parties".into()));
        }
        Ok(Self {
            parties: groups.iter().map(|g| ds.features.select_cols(g)).collect(),
            labels: Some(ds.labels.clone()),
            task: ds.task,
            columns: groups.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.parties.len()
    }

    pub fn n(&self) -> usize {
        self.parties.first().map_or(0, DenseMatrix::rows)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.parties.iter().map(DenseMatrix::cols).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for (p, x) in self.parties.iter().enumerate() {
            if x.rows() != n {
                return Err(Error::dim("party rows", n, format!("{} at party {p}", x.rows())));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::dim("label count", n, l.len()));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Result<&[f64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("the host holds no labels".into()))
    }

    pub fn targets(&self) -> Result<DenseMatrix> {
        label_targets(self.labels()?, self.task)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            parties: self.parties.iter().map(|x| x.select_rows(idx)).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            task: self.task,
            columns: self.columns.clone(),
        }
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    /// All parties' features side by side, in party order.
    pub fn combined(&self) -> Result<DenseMatrix> {
        DenseMatrix::hstack(&self.parties.iter().collect::<Vec<_>>())
    }

    /// Each party fits its own normalizer on `self` (the training split) and
    /// applies it to both `self` and `test`.
    pub fn normalize_with(&self, test: &Self, scheme: NormalizeScheme) -> Result<(Self, Self)> {
        if test.k() != self.k() {
            return Err(Error::dim("normalize parties", self.k(), test.k()));
        }
        let mut train_out = self.clone();
        let mut test_out = test.clone();
        for p in 0..self.k() {
            let norm = Normalizer::fit(&self.parties[p], scheme);
            train_out.parties[p] = norm.apply(&self.parties[p])?;
            test_out.parties[p] = norm.apply(&test.parties[p])?;
        }
        Ok((train_out, test_out))
    }
}

/// Supervised loss for a task: softmax cross-entropy on logits for
/// classification, MSE for regression.
pub fn task_loss(task: Task) -> LossKind {
    if task.is_classification() {
        LossKind::SoftmaxCrossEntropy
    } else {
        LossKind::Mse
    }
}
