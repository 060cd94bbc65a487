use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::rng::Rng;

fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `g` so its L2 norm is at most `clip_norm`:
/// `g / max(1, ‖g‖₂ / Ω)`. An infinite `clip_norm` leaves `g` untouched.
pub fn clip_gradient(g: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    if !(clip_norm > 0.0) {
        return Err(Error::Config(format!("clip norm must be > 0, got {clip_norm}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clip_gradient input"));
    }
    let factor = (l2_norm(g) / clip_norm).max(1.0);
    Ok(g.iter().map(|v| v / factor).collect())
}

/// `(g_sum + z) / b` with `z ~ N(0, σ²Ω²I)`. No draws are made when `σ = 0`.
pub fn gaussian_perturb(
    g_sum: &[f64],
    noise_multiplier: f64,
    clip_norm: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::InvalidInput("gaussian_perturb with batch size 0".into()));
    }
    let std = noise_std(noise_multiplier, clip_norm)?;
    let b = batch_size as f64;
    Ok(match std {
        None => g_sum.iter().map(|v| v / b).collect(),
        Some(std) => g_sum
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                (v + std * z) / b
            })
            .collect(),
    })
}

fn noise_std(noise_multiplier: f64, clip_norm: f64) -> Result<Option<f64>> {
    if !(noise_multiplier >= 0.0) || noise_multiplier.is_infinite() {
        return Err(Error::Config(format!(
            "noise multiplier must be finite and >= 0, got {noise_multiplier}"
        )));
    }
    if noise_multiplier == 0.0 {
        return Ok(None);
    }
    let std = noise_multiplier * clip_norm;
    if !std.is_finite() {
        return Err(Error::Config(
            "nonzero noise multiplier with an infinite clip norm gives infinite noise".into(),
        ));
    }
    Ok(Some(std))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipGranularity {
    /// Clip every example's gradient, sum, add noise, divide by the batch
    /// size. The accountant's sensitivity argument assumes this mode.
    #[default]
    PerExample,
    /// Clip the mean batch gradient once and add noise to it. Accounting for
    /// this mode is heuristic.
    Batch,
}

/// Clip-then-noise applied to every gradient step of a private training loop.
#[derive(Debug, Clone)]
pub struct DpHook {
    clip_norm: f64,
    noise_multiplier: f64,
    granularity: ClipGranularity,
    rng: Rng,
}

impl DpHook {
    pub fn new(clip_norm: f64, noise_multiplier: f64, granularity: ClipGranularity, rng: Rng) -> Result<Self> {
        if !(clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm must be > 0, got {clip_norm}")));
        }
        noise_std(noise_multiplier, clip_norm)?;
        Ok(Self {
            clip_norm,
            noise_multiplier,
            granularity,
            rng,
        })
    }

    pub fn clips_per_example(&self) -> bool {
        self.granularity == ClipGranularity::PerExample
    }

    pub fn privatize_per_example(&mut self, per_example: &[ModelParams]) -> Result<ModelParams> {
        let first = per_example
            .first()
            .ok_or_else(|| Error::InvalidInput("privatize an empty batch".into()))?;
        let mut sum = vec![0.0; first.num_values()];
        for g in per_example {
            let clipped = clip_gradient(&g.to_flat(), self.clip_norm)?;
            for (s, c) in sum.iter_mut().zip(&clipped) {
                *s += c;
            }
        }
        let noisy = gaussian_perturb(
            &sum,
            self.noise_multiplier,
            self.clip_norm,
            per_example.len(),
            &mut self.rng,
        )?;
        ModelParams::from_flat(first.spec(), &noisy)
    }

    /// Literal batch variant: `clip(ḡ) + N(0, σ²Ω²I)`.
    pub fn privatize_batch(&mut self, mean_grad: ModelParams) -> Result<ModelParams> {
        let clipped = clip_gradient(&mean_grad.to_flat(), self.clip_norm)?;
        let noisy = gaussian_perturb(&clipped, self.noise_multiplier, self.clip_norm, 1, &mut self.rng)?;
        ModelParams::from_flat(mean_grad.spec(), &noisy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn clip_examples() {
        assert_eq!(clip_gradient(&[3.0, 4.0], 10.0).unwrap(), vec![3.0, 4.0]);
        let c = clip_gradient(&[3.0, 4.0], 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_gradient(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(clip_gradient(&[1e300, -2.0], f64::INFINITY).unwrap(), vec![1e300, -2.0]);
        assert!(clip_gradient(&[f64::NAN], 1.0).is_err());
        assert!(clip_gradient(&[1.0], 0.0).is_err());
    }

    #[test]
    fn clip_norm_property() {
        use proptest::prelude::*;
        proptest!(|(g in proptest::collection::vec(-100.0f64..100.0, 1..20), omega in 0.01f64..50.0)| {
            let n = l2_norm(&g);
            let c = clip_gradient(&g, omega).unwrap();
            let cn = l2_norm(&c);
            prop_assert!(cn <= omega * (1.0 + 1e-12));
            prop_assert!((cn - n.min(omega)).abs() <= 1e-9 * omega.max(n));
            if n > 0.0 {
                // direction preserved
                let cos: f64 = g.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / (n * cn);
                prop_assert!((cos - 1.0).abs() < 1e-9);
            }
        });
    }

    #[test]
    fn perturb_noiseless_and_seeded() {
        let g = [2.0, 4.0, -6.0];
        assert_eq!(
            gaussian_perturb(&g, 0.0, 1.0, 2, &mut rng_for(0, 0)).unwrap(),
            vec![1.0, 2.0, -3.0]
        );
        let a = gaussian_perturb(&g, 1.0, 1.0, 2, &mut rng_for(5, 1)).unwrap();
        let b = gaussian_perturb(&g, 1.0, 1.0, 2, &mut rng_for(5, 1)).unwrap();
        assert_eq!(a, b);
        assert!(gaussian_perturb(&g, 1.0, 1.0, 0, &mut rng_for(5, 1)).is_err());
        assert!(gaussian_perturb(&g, 1.0, f64::INFINITY, 1, &mut rng_for(5, 1)).is_err());
    }

    #[test]
    fn perturb_std_monte_carlo() {
        let zeros = vec![0.0; 100_000];
        let noisy = gaussian_perturb(&zeros, 1.0, 2.0, 1, &mut rng_for(11, 2)).unwrap();
        let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
        let var = noisy.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (noisy.len() - 1) as f64;
        assert!((var.sqrt() - 2.0).abs() / 2.0 < 0.02, "std {}", var.sqrt());
    }
}
