//! Dataset ingestion, normalization, feature partitioning across parties,
//! synthetic data and train/test splitting.

pub mod io;
pub mod normalize;
pub mod partition;
pub mod split;
pub mod synthetic;

pub use io::{load_csv, load_importance_file, load_libsvm, write_csv, write_libsvm};
pub use normalize::{NormalizeScheme, Normalizer};
pub use partition::{importance_scores, partition_columns, partition_features, ImportanceSource, PartitionSpec};
pub use split::{k_fold, train_test_split};
pub use synthetic::{make_synthetic, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// Labels in `{0, 1}`.
    Binary,
    /// Labels are class indices `0..c`.
    Multiclass(usize),
}

impl Task {
    pub fn is_classification(&self) -> bool {
        !matches!(self, Task::Regression)
    }

    /// Width of the model output for this task.
    pub fn output_width(&self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Binary => 2,
            Task::Multiclass(c) => *c,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Task::Regression => None,
            Task::Binary => Some(2),
            Task::Multiclass(c) => Some(*c),
        }
    }

    /// Guesses a task from raw labels: at most two integral values out of
    /// `{-1, 0, 1}` is binary, other small non-negative integers multiclass,
    /// anything else regression.
    pub fn infer(labels: &[f64]) -> Task {
        let integral = labels.iter().all(|v| v.fract() == 0.0);
        if !integral || labels.is_empty() {
            return Task::Regression;
        }
        let mut distinct: Vec<i64> = labels.iter().map(|&v| v as i64).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() <= 2 && distinct.iter().all(|v| (-1..=1).contains(v)) {
            return Task::Binary;
        }
        match (distinct.first(), distinct.last()) {
            (Some(&lo), Some(&hi)) if lo >= 0 && hi < 64 => Task::Multiclass(hi as usize + 1),
            _ => Task::Regression,
        }
    }
}

/// A sample-by-feature matrix with labels, before partitioning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
    /// `(rows, cols)` when features are a flattened image.
    pub grid: Option<(usize, usize)>,
    pub task: Task,
}

impl RawDataset {
    pub fn new(features: DenseMatrix, labels: Vec<f64>, task: Task) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::dim("RawDataset labels", features.rows(), labels.len()));
        }
        let ds = Self {
            features,
            labels,
            grid: None,
            task,
        };
        ds.check_labels()?;
        Ok(ds)
    }

    pub fn with_grid(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.features.cols() {
            return Err(Error::dim("RawDataset grid", self.features.cols(), rows * cols));
        }
        self.grid = Some((rows, cols));
        Ok(self)
    }

    /// Overrides the task, mapping binary `-1` labels to `0`.
    pub fn with_task(mut self, task: Task) -> Result<Self> {
        if task == Task::Binary {
            for l in &mut self.labels {
                if *l == -1.0 {
                    *l = 0.0;
                }
            }
        }
        self.task = task;
        self.check_labels()?;
        Ok(self)
    }

    fn check_labels(&self) -> Result<()> {
        if let Some(c) = self.task.num_classes() {
            if let Some(bad) = self
                .labels
                .iter()
                .find(|&&l| l.fract() != 0.0 || l < 0.0 || l >= c as f64)
            {
                return Err(Error::InvalidInput(format!(
                    "label {bad} is not a class index for {:?}",
                    self.task
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn m(&self) -> usize {
        self.features.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            grid: self.grid,
            task: self.task,
        }
    }
}

/// Model targets for `labels`: one-hot rows for classification, a single
/// column for regression.
pub fn label_targets(labels: &[f64], task: Task) -> Result<DenseMatrix> {
    match task.num_classes() {
        None => DenseMatrix::column(labels),
        Some(c) => {
            let mut t = DenseMatrix::zeros(labels.len(), c);
            for (i, &l) in labels.iter().enumerate() {
                let k = l as usize;
                if l.fract() != 0.0 || l < 0.0 || k >= c {
                    return Err(Error::InvalidInput(format!("label {l} outside 0..{c}")));
                }
                t.set(i, k, 1.0);
            }
            Ok(t)
        }
    }
}

/// Accuracy for classification (argmax), RMSE for regression.
pub fn metric(task: Task, pred: &DenseMatrix, labels: &[f64]) -> Result<f64> {
    if pred.rows() != labels.len() {
        return Err(Error::dim("metric", labels.len(), pred.rows()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("metric over zero samples".into()));
    }
    Ok(match task {
        Task::Regression => {
            let mse = pred
                .row_iter()
                .zip(labels)
                .map(|(p, y)| (p[0] - y).powi(2))
                .sum::<f64>()
                / labels.len() as f64;
            mse.sqrt()
        }
        _ => {
            let hits = pred
                .argmax_rows()
                .iter()
                .zip(labels)
                .filter(|(&p, &y)| p as f64 == y)
                .count();
            hits as f64 / labels.len() as f64
        }
    })
}

pub fn metric_name(task: Task) -> &'static str {
    if task.is_classification() {
        "accuracy"
    } else {
        "rmse"
    }
}
