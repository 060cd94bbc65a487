use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeScheme {
    #[default]
    Zscore,
    Minmax,
    None,
}

/// Per-column affine map `(x − shift) · factor`, fitted on one matrix
/// (the training split) and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    shift: Vec<f64>,
    factor: Vec<f64>,
}

impl Normalizer {
    /// Zero-variance (zscore) or zero-range (minmax) columns get factor 0, so
    /// they map to 0.
    pub fn fit(x: &DenseMatrix, scheme: NormalizeScheme) -> Self {
        let m = x.cols();
        match scheme {
            NormalizeScheme::None => Self {
                shift: vec![0.0; m],
                factor: vec![1.0; m],
            },
            NormalizeScheme::Zscore => {
                let mean = x.col_means();
                let n = x.rows().max(1) as f64;
                let mut var = vec![0.0; m];
                for row in x.row_iter() {
                    for ((v, r), mu) in var.iter_mut().zip(row).zip(&mean) {
                        *v += (r - mu) * (r - mu);
                    }
                }
                let factor = var
                    .iter()
                    .map(|v| {
                        let sd = (v / n).sqrt();
                        if sd > 0.0 {
                            1.0 / sd
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Self { shift: mean, factor }
            }
            NormalizeScheme::Minmax => {
                let mut lo = vec![f64::INFINITY; m];
                let mut hi = vec![f64::NEG_INFINITY; m];
                for row in x.row_iter() {
                    for (c, &v) in row.iter().enumerate() {
                        lo[c] = lo[c].min(v);
                        hi[c] = hi[c].max(v);
                    }
                }
                let factor = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| if h > l { 1.0 / (h - l) } else { 0.0 })
                    .collect();
                let shift = lo.into_iter().map(|l| if l.is_finite() { l } else { 0.0 }).collect();
                Self { shift, factor }
            }
        }
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.shift.len() {
            return Err(Error::dim("Normalizer::apply columns", self.shift.len(), x.cols()));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, s), f) in out.row_mut(r).iter_mut().zip(&self.shift).zip(&self.factor) {
                *v = (*v - s) * f;
            }
        }
        Ok(out)
    }
}
