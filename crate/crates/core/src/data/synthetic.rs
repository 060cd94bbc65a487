//! Latent-factor synthetic task. Each party's block is a noisy linear image
//! of its own low-dimensional latent vector, and the label is a fixed random
//! function of the latents of the informative parties, so no single party
//! can predict it alone.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PartitionSpec, RawDataset, Task};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{rng_for, stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    /// Parties whose latents drive the label. Empty means all parties.
    #[serde(default)]
    pub informative: Vec<usize>,
    #[serde(default = "default_feature_noise")]
    pub feature_noise: f64,
    /// Std of the noise added to the label score. Infinite gives labels
    /// independent of the features.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    /// Weight of a product term between the first two informative latents.
    #[serde(default = "default_nonlinear")]
    pub nonlinear: f64,
    #[serde(default)]
    pub regression: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_latent_dim() -> usize {
    2
}
fn default_feature_noise() -> f64 {
    0.3
}
fn default_label_noise() -> f64 {
    0.1
}
fn default_nonlinear() -> f64 {
    0.5
}

impl SyntheticSpec {
    pub fn new(n: usize, m: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            k,
            latent_dim: default_latent_dim(),
            informative: Vec::new(),
            feature_noise: default_feature_noise(),
            label_noise: default_label_noise(),
            nonlinear: default_nonlinear(),
            regression: false,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.latent_dim == 0 {
            return Err(Error::Config("synthetic data needs n, k, latent_dim >= 1".into()));
        }
        if !self.m.is_multiple_of(self.k) {
            return Err(Error::Config(format!(
                "synthetic m = {} is not divisible by k = {}",
                self.m, self.k
            )));
        }
        if let Some(p) = self.informative.iter().find(|&&p| p >= self.k) {
            return Err(Error::Config(format!(
                "informative party {p} out of range for k = {}",
                self.k
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) || !(self.label_noise >= 0.0) {
            return Err(Error::Config("synthetic noise levels must be >= 0".into()));
        }
        if !self.nonlinear.is_finite() {
            return Err(Error::Config("synthetic nonlinear weight must be finite".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_vector(r: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..r).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// The dataset and the matching equal division into `k` parties.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(RawDataset, PartitionSpec)> {
    spec.validate()?;
    let (n, m, k, r) = (spec.n, spec.m, spec.k, spec.latent_dim);
    let w = m / k;
    let informative: Vec<usize> = if spec.informative.is_empty() {
        (0..k).collect()
    } else {
        spec.informative.clone()
    };
    let mut rng = rng_for(spec.seed, stream::DATA);

    let loadings: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..r * w).map(|_| gaussian(&mut rng) / (r as f64).sqrt()).collect())
        .collect();
    let directions: Vec<Vec<f64>> = informative.iter().map(|_| unit_vector(r, &mut rng)).collect();
    let scale = 1.0 / (informative.len() as f64).sqrt();

    let mut data = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let latents: Vec<Vec<f64>> = (0..k).map(|_| (0..r).map(|_| gaussian(&mut rng)).collect()).collect();
        for (z, a) in latents.iter().zip(&loadings) {
            for c in 0..w {
                let clean: f64 = (0..r).map(|i| z[i] * a[i * w + c]).sum();
                data.push(clean + spec.feature_noise * gaussian(&mut rng));
            }
        }
        let mut score: f64 = informative
            .iter()
            .zip(&directions)
            .map(|(&p, v)| scale * latents[p].iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        if informative.len() >= 2 {
            score += spec.nonlinear * latents[informative[0]][0] * latents[informative[1]][0];
        }
        let label = if spec.label_noise.is_infinite() {
            if spec.regression {
                gaussian(&mut rng)
            } else {
                f64::from(u8::from(rng.random_bool(0.5)))
            }
        } else {
            let s = score + spec.label_noise * gaussian(&mut rng);
            if spec.regression {
                s
            } else {
                f64::from(u8::from(s > 0.0))
            }
        };
        labels.push(label);
    }
    let task = if spec.regression {
        Task::Regression
    } else {
        Task::Binary
    };
    let ds = RawDataset::new(DenseMatrix::from_vec(n, m, data)?, labels, task)?;
    Ok((
        ds,
        PartitionSpec::Equal {
            k,
            shuffle: false,
            seed: 0,
        },
    ))
}
