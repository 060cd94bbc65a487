use serde::{Deserialize, Serialize};

use crate::dp::ClipGranularity;
use crate::error::{Error, Result};
use crate::nn::{OptimizerConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Non-private.
    L0,
    /// Every party trains with clipped, noised gradients.
    L1,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuestLearner {
    #[default]
    Nat,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuestConfig {
    #[serde(default)]
    pub learner: GuestLearner,
    pub hidden: Vec<usize>,
    pub repr_dim: usize,
    #[serde(default = "one")]
    pub update_freq: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl HostConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
        }
    }
}

fn one() -> usize {
    1
}
fn default_delta() -> f64 {
    1e-5
}
fn default_clip() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSettings {
    /// Fixed noise multiplier shared by all parties.
    #[serde(default)]
    pub noise_multiplier: Option<f64>,
    /// Calibrate a shared noise multiplier to this moments-division ε.
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    /// Permit `noise_multiplier = 0` in private mode (no privacy).
    #[serde(default)]
    pub allow_zero_noise: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// `"inf"` disables clipping.
    #[serde(default = "default_clip", with = "extended_real")]
    pub clip_norm: f64,
    #[serde(default)]
    pub granularity: ClipGranularity,
}

impl Default for DpSettings {
    fn default() -> Self {
        Self {
            noise_multiplier: None,
            target_epsilon: None,
            allow_zero_noise: false,
            delta: default_delta(),
            clip_norm: default_clip(),
            granularity: ClipGranularity::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub guest: GuestConfig,
    pub host: HostConfig,
    #[serde(default)]
    pub dp: DpSettings,
    /// Std of Gaussian noise added to every transmitted representation.
    #[serde(default)]
    pub repr_noise: f64,
    /// Guests whose representations arrive late and are replaced by zeros.
    #[serde(default)]
    pub laggy: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        let mut problems = Vec::new();
        if k < 2 {
            problems.push(format!("federated training needs k >= 2 parties, got {k}"));
        }
        let g = &self.guest;
        if g.repr_dim == 0 {
            problems.push("guest.repr_dim must be >= 1".into());
        }
        if g.update_freq == 0 {
            problems.push("guest.update_freq must be >= 1".into());
        }
        for (name, b) in [
            ("guest.batch_size", g.batch_size),
            ("host.batch_size", self.host.batch_size),
        ] {
            if b == 0 || b > n.max(1) {
                problems.push(format!("{name} must lie in [1, {n}], got {b}"));
            }
        }
        if g.hidden.contains(&0) || self.host.hidden.contains(&0) {
            problems.push("hidden layer sizes must be >= 1".into());
        }
        for (name, opt) in [
            ("guest.optimizer", &g.optimizer),
            ("host.optimizer", &self.host.optimizer),
        ] {
            if let Err(e) = opt.validate() {
                problems.push(format!("{name}: {e}"));
            }
        }
        if !(self.repr_noise >= 0.0 && self.repr_noise.is_finite()) {
            problems.push(format!("repr_noise must be finite and >= 0, got {}", self.repr_noise));
        }
        for &p in &self.laggy {
            if p == 0 {
                problems.push("the host (party 0) cannot be laggy".into());
            } else if p >= k {
                problems.push(format!("laggy party {p} does not exist (k = {k})"));
            }
        }
        if self.mode == Mode::L1 {
            let dp = &self.dp;
            if g.learner == GuestLearner::Pca {
                problems.push("private mode needs gradient-trained (nat) guests".into());
            }
            match (dp.noise_multiplier, dp.target_epsilon) {
                (Some(_), Some(_)) => problems.push("set only one of dp.noise_multiplier and dp.target_epsilon".into()),
                (None, None) => problems.push("private mode needs dp.noise_multiplier or dp.target_epsilon".into()),
                (Some(s), None) if !(s >= 0.0 && s.is_finite()) => {
                    problems.push(format!("dp.noise_multiplier must be finite and >= 0, got {s}"))
                }
                (Some(s), None) if s == 0.0 && !dp.allow_zero_noise => problems
                    .push("dp.noise_multiplier = 0 gives no privacy; set dp.allow_zero_noise to run anyway".into()),
                (None, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                    problems.push(format!("dp.target_epsilon must be finite and > 0, got {e}"))
                }
                _ => {}
            }
            if !(dp.delta > 0.0 && dp.delta < 1.0) {
                problems.push(format!("dp.delta must lie in (0, 1), got {}", dp.delta));
            }
            if !(dp.clip_norm > 0.0) {
                problems.push(format!("dp.clip_norm must be > 0, got {}", dp.clip_norm));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Settings for SplitNN training and multi-round fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
}

/// JSON has no infinities, so they travel as the strings `"inf"`/`"-inf"`.
mod extended_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_clip_norm_round_trips() {
        let dp = DpSettings {
            clip_norm: f64::INFINITY,
            ..DpSettings::default()
        };
        let json = serde_json::to_string(&dp).unwrap();
        assert!(json.contains("\"clip_norm\":\"inf\""));
        assert_eq!(serde_json::from_str::<DpSettings>(&json).unwrap(), dp);
        let parsed: DpSettings = serde_json::from_str(r#"{"clip_norm": 2.5}"#).unwrap();
        assert_eq!(parsed.clip_norm, 2.5);
        assert!(serde_json::from_str::<DpSettings>(r#"{"clip_norm": "big"}"#).is_err());
        assert!(serde_json::from_str::<DpSettings>(r#"{"clipnorm": 1}"#).is_err());
    }
}
