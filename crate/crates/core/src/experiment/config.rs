use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{
    load_csv, load_libsvm, make_synthetic, NormalizeScheme, PartitionSpec, RawDataset, SyntheticSpec, Task,
};
use crate::error::{Error, Result};
use crate::fed::{DpSettings, GuestConfig, GuestLearner, HostConfig, Mode, RunConfig, SplitConfig};
use crate::nn::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        grid: Option<(usize, usize)>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        grid: Option<(usize, usize)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FedonceL0,
    FedonceL1,
    Multiround,
    Splitnn,
    Solo,
    Combine,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FedonceL0 => "fedonce_l0",
            Method::FedonceL1 => "fedonce_l1",
            Method::Multiround => "multiround",
            Method::Splitnn => "splitnn",
            Method::Solo => "solo",
            Method::Combine => "combine",
        }
    }
}

/// Everything about the federated protocol except the mode and the seed,
/// which each method and run supply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub guest: GuestConfig,
    pub host: HostConfig,
    #[serde(default)]
    pub dp: DpSettings,
    #[serde(default)]
    pub repr_noise: f64,
    #[serde(default)]
    pub laggy: Vec<usize>,
}

impl Protocol {
    pub fn run_config(&self, mode: Mode, seed: u64) -> RunConfig {
        RunConfig {
            mode,
            guest: self.guest.clone(),
            host: self.host.clone(),
            dp: self.dp,
            repr_noise: self.repr_noise,
            laggy: self.laggy.clone(),
            seed,
        }
    }
}

/// End-to-end training settings for SplitNN and multi-round fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl SplitSettings {
    pub fn split_config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommTraceSettings {
    pub budget_bytes: u64,
}

/// Parties each run `epochs` passes over `n` samples in batches of
/// `batch_size`, so `q = batch_size / n` and `T = epochs · ⌈n / batch_size⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyCurveSettings {
    pub n: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub sigma: f64,
    pub delta: f64,
    pub k_max: usize,
}

impl PrivacyCurveSettings {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.n == 0 || self.batch_size == 0 || self.batch_size > self.n {
            issues.push("privacy_curve needs 1 <= batch_size <= n");
        }
        if self.k_max == 0 {
            issues.push("privacy_curve.k_max must be >= 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            issues.push("privacy_curve.sigma must be finite and > 0");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            issues.push("privacy_curve.delta must lie in (0, 1)");
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }

    /// Reads the `privacy_curve` section from either a full experiment
    /// config or a document holding only that section.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("not valid JSON: {e}")))?;
        let only_curve = value
            .as_object()
            .is_some_and(|o| o.keys().all(|k| k == "privacy_curve"));
        let pc = if only_curve {
            let section = value.get("privacy_curve").cloned().unwrap_or(Value::Null);
            serde_json::from_value::<Self>(section).map_err(|e| Error::Config(format!("privacy_curve: {e}")))?
        } else {
            ExperimentConfig::from_json(text)?
                .privacy_curve
                .ok_or_else(|| Error::Config("missing privacy_curve section".into()))?
        };
        pc.validate()?;
        Ok(pc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Representation dimension.
    D,
    /// Host share of dominant features (biased partition).
    Alpha,
    /// Number of parties (synthetic data).
    K,
    /// Target ε of the private run.
    Epsilon,
    /// Representation noise.
    SigmaR,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::D => "d",
            SweepAxis::Alpha => "alpha",
            SweepAxis::K => "k",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::SigmaR => "sigma_r",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_id() -> String {
    "experiment".into()
}
fn default_test_fraction() -> f64 {
    0.1
}
fn default_methods() -> Vec<Method> {
    vec![Method::FedonceL0, Method::Solo, Method::Combine]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub dataset: DatasetSource,
    /// Overrides the task inferred from the labels.
    #[serde(default)]
    pub task: Option<Task>,
    /// Defaults to the synthetic layout, or two equal parties.
    #[serde(default)]
    pub partition: Option<PartitionSpec>,
    #[serde(default)]
    pub normalize: NormalizeScheme,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub protocol: Protocol,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub split: Option<SplitSettings>,
    /// Repeat every run with each party acting as the host.
    #[serde(default)]
    pub host_rotation: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub save_model: bool,
    #[serde(default)]
    pub comm_trace: Option<CommTraceSettings>,
    #[serde(default)]
    pub privacy_curve: Option<PrivacyCurveSettings>,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
}

fn check<T: DeserializeOwned>(key: &str, v: &Value, issues: &mut Vec<String>) {
    if let Err(e) = serde_json::from_value::<T>(v.clone()) {
        issues.push(format!("{key}: {e}"));
    }
}

/// Field-by-field pass so one bad section doesn't hide the others.
fn diagnose(v: &Value) -> Vec<String> {
    let Some(obj) = v.as_object() else {
        return vec!["the config must be a JSON object".into()];
    };
    let mut issues = Vec::new();
    for (k, val) in obj {
        match k.as_str() {
            "id" => check::<String>(k, val, &mut issues),
            "dataset" => check::<DatasetSource>(k, val, &mut issues),
            "task" => check::<Option<Task>>(k, val, &mut issues),
            "partition" => check::<Option<PartitionSpec>>(k, val, &mut issues),
            "normalize" => check::<NormalizeScheme>(k, val, &mut issues),
            "test_fraction" => check::<f64>(k, val, &mut issues),
            "protocol" => check::<Protocol>(k, val, &mut issues),
            "methods" => check::<Vec<Method>>(k, val, &mut issues),
            "split" => check::<Option<SplitSettings>>(k, val, &mut issues),
            "host_rotation" | "save_model" => check::<bool>(k, val, &mut issues),
            "seeds" => check::<Vec<u64>>(k, val, &mut issues),
            "comm_trace" => check::<Option<CommTraceSettings>>(k, val, &mut issues),
            "privacy_curve" => check::<Option<PrivacyCurveSettings>>(k, val, &mut issues),
            "sweep" => check::<Option<SweepSettings>>(k, val, &mut issues),
            other => issues.push(format!("unknown key {other:?}")),
        }
    }
    for required in ["dataset", "protocol"] {
        if !obj.contains_key(required) {
            issues.push(format!("missing required key {required:?}"));
        }
    }
    issues
}

impl ExperimentConfig {
    /// Parses and validates, reporting every problem found at once.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("not valid JSON: {e}")))?;
        let cfg: Self = match serde_json::from_value(value.clone()) {
            Ok(c) => c,
            Err(e) => {
                let mut issues = diagnose(&value);
                if issues.is_empty() {
                    issues.push(e.to_string());
                }
                return Err(Error::Config(issues.join("\n")));
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The fully resolved config, defaults included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            issues.push(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.seeds.is_empty() {
            issues.push("seeds must not be empty".into());
        }
        if self.methods.is_empty() {
            issues.push("methods must not be empty".into());
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            issues.push("methods lists a method twice".into());
        }
        let needs_split = self
            .methods
            .iter()
            .any(|m| matches!(m, Method::Splitnn | Method::Multiround));
        if needs_split && self.split.is_none() {
            issues.push("splitnn and multiround need a \"split\" section".into());
        }
        if let Some(s) = &self.split {
            if s.batch_size == 0 {
                issues.push("split.batch_size must be >= 1".into());
            }
            if let Err(e) = s.optimizer.validate() {
                issues.push(format!("split.optimizer: {e}"));
            }
        }
        if self.methods.contains(&Method::Multiround) && !self.methods.contains(&Method::FedonceL0) {
            issues.push("multiround fine-tunes the fedonce_l0 model, so it needs fedonce_l0 too".into());
        }
        let p = &self.protocol;
        if self.methods.contains(&Method::Multiround)
            && (p.repr_noise > 0.0 || !p.laggy.is_empty() || p.guest.learner == GuestLearner::Pca)
        {
            issues.push("multiround cannot fine-tune a model with repr_noise, laggy parties or pca guests".into());
        }
        let mode = if self.methods.contains(&Method::FedonceL1) {
            Mode::L1
        } else {
            Mode::L0
        };
        // Party count and sample size are only known per run; check the rest.
        if let Err(Error::Config(msg)) = self.protocol.run_config(mode, 0).validate(usize::MAX, usize::MAX) {
            issues.extend(msg.split("; ").map(|m| format!("protocol: {m}")));
        }
        if let Some(Err(Error::Config(msg))) = self.privacy_curve.map(|pc| pc.validate()) {
            issues.push(msg);
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                issues.push("sweep.values must not be empty".into());
            }
            for &v in &sw.values {
                let ok = match sw.axis {
                    SweepAxis::D | SweepAxis::K => v >= 1.0 && v.fract() == 0.0,
                    SweepAxis::Alpha => (0.0..=1.0).contains(&v),
                    SweepAxis::Epsilon => v > 0.0 && v.is_finite(),
                    SweepAxis::SigmaR => v >= 0.0 && v.is_finite(),
                };
                if !ok {
                    issues.push(format!("sweep value {v} is invalid for axis {}", sw.axis.as_str()));
                }
            }
            match sw.axis {
                SweepAxis::Alpha if !matches!(self.partition, Some(PartitionSpec::Biased { .. })) => {
                    issues.push("an alpha sweep needs a biased partition".into())
                }
                SweepAxis::K if !matches!(self.dataset, DatasetSource::Synthetic(_)) => {
                    issues.push("a k sweep needs a synthetic dataset".into())
                }
                SweepAxis::Epsilon if !self.methods.contains(&Method::FedonceL1) => {
                    issues.push("an epsilon sweep needs the fedonce_l1 method".into())
                }
                _ => {}
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("\n")))
        }
    }

    pub fn load_dataset(&self) -> Result<RawDataset> {
        let ds = match &self.dataset {
            DatasetSource::Synthetic(spec) => make_synthetic(spec)?.0,
            DatasetSource::Libsvm { path, grid } => with_grid(load_libsvm(path)?, *grid)?,
            DatasetSource::Csv {
                path,
                label_column,
                grid,
            } => with_grid(load_csv(path, label_column)?, *grid)?,
        };
        match self.task {
            Some(t) => ds.with_task(t),
            None => Ok(ds),
        }
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        match (&self.partition, &self.dataset) {
            (Some(p), _) => p.clone(),
            (None, DatasetSource::Synthetic(s)) => PartitionSpec::Equal {
                k: s.k,
                shuffle: false,
                seed: 0,
            },
            (None, _) => PartitionSpec::Equal {
                k: 2,
                shuffle: false,
                seed: 0,
            },
        }
    }

    /// Fills in the defaulted partition so the echo shows it.
    pub fn resolved(&self) -> Self {
        Self {
            partition: Some(self.partition_spec()),
            ..self.clone()
        }
    }
}

fn with_grid(ds: RawDataset, grid: Option<(usize, usize)>) -> Result<RawDataset> {
    match grid {
        Some((r, c)) => ds.with_grid(r, c),
        None => Ok(ds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "dataset": {"synthetic": {"n": 100, "m": 8, "k": 2}},
        "protocol": {
            "guest": {"hidden": [8], "repr_dim": 2, "epochs": 2, "batch_size": 16,
                      "optimizer": {"kind": "adam", "learning_rate": 0.001}},
            "host": {"hidden": [8], "epochs": 2, "batch_size": 16,
                     "optimizer": {"kind": "adam", "learning_rate": 0.001}}
        }
    }"#;

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.methods, default_methods());
        let echo = cfg.resolved().to_json();
        let again = ExperimentConfig::from_json(&echo).unwrap();
        assert_eq!(again, cfg.resolved());
    }

    #[test]
    fn all_problems_reported() {
        let text = MINIMAL.replacen('{', r#"{"bogus": 1, "test_fraction": "x", "seeds": [-1],"#, 1);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(
            err.contains("bogus") && err.contains("test_fraction") && err.contains("seeds"),
            "{err}"
        );
        let err = ExperimentConfig::from_json("{}").unwrap_err().to_string();
        assert!(err.contains("dataset") && err.contains("protocol"), "{err}");
    }

    #[test]
    fn nested_unknown_keys_rejected() {
        let text = MINIMAL.replace("\"repr_dim\": 2", "\"repr_dim\": 2, \"reprdim\": 3");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn multiround_needs_a_plain_model() {
        let text = MINIMAL
            .replacen(
                '{',
                r#"{"methods": ["fedonce_l0", "multiround"],
                    "split": {"epochs": 1, "batch_size": 8, "optimizer": {"kind": "sgd", "learning_rate": 0.1}},"#,
                1,
            )
            .replace("\"host\": {", "\"repr_noise\": 1.0, \"host\": {");
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("repr_noise"), "{err}");
    }

    #[test]
    fn semantic_errors() {
        let text = MINIMAL.replacen('{', r#"{"methods": ["splitnn"], "test_fraction": 1.5,"#, 1);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("split") && err.contains("test_fraction"), "{err}");
        let text = MINIMAL.replacen('{', r#"{"methods": ["fedonce_l1"],"#, 1);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("dp."), "{err}");
    }
}
