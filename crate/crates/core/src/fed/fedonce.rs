//! One-shot training and prediction.

use rand_distr::{Distribution, StandardNormal};

use super::config::{GuestLearner, Mode, RunConfig};
use super::ledger::{CommLedger, PayloadKind, Phase};
use super::{task_loss, PartitionedDataset};
use crate::data::metric;
use crate::dp::{
    calibrate_sigma_parties, moments_division_eps, steps_for_epochs, DivisionMethod, DpHook, MomentMode, PartyBudget,
    PrivacyReport,
};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nat::{extract_representation, nat_train, pca_fit, pca_transform, NatConfig, PcaModel};
use crate::nn::{fit, predict, MlpSpec, ModelParams, OutputActivation};
use crate::rng::{derive_seed, rng_for, stream};

#[derive(Debug, Clone, PartialEq)]
pub enum GuestModel {
    Nat(ModelParams),
    Pca(PcaModel),
}

impl GuestModel {
    pub fn input_size(&self) -> usize {
        match self {
            GuestModel::Nat(p) => p.spec().input_size(),
            GuestModel::Pca(p) => p.mean.len(),
        }
    }

    pub fn output_size(&self) -> usize {
        match self {
            GuestModel::Nat(p) => p.spec().output_size(),
            GuestModel::Pca(p) => p.components.rows(),
        }
    }

    pub fn represent(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            GuestModel::Nat(p) => extract_representation(p, x),
            GuestModel::Pca(p) => pca_transform(p, x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedModel {
    /// Models of parties `1..k`, in party order.
    pub guests: Vec<GuestModel>,
    pub host: ModelParams,
    pub repr_dim: usize,
    /// Representation noise std; also applied when predicting.
    pub repr_noise: f64,
    pub noise_seed: u64,
    pub laggy: Vec<usize>,
}

impl FedModel {
    pub fn k(&self) -> usize {
        self.guests.len() + 1
    }

    fn check_data(&self, data: &PartitionedDataset) -> Result<()> {
        data.validate()?;
        if data.k() != self.k() {
            return Err(Error::dim("party count", self.k(), data.k()));
        }
        for (j, g) in self.guests.iter().enumerate() {
            if g.input_size() != data.parties[j + 1].cols() {
                return Err(Error::dim(
                    "guest feature count",
                    g.input_size(),
                    data.parties[j + 1].cols(),
                ));
            }
        }
        let host_in = data.parties[0].cols() + self.guests.len() * self.repr_dim;
        if self.host.spec().input_size() != host_in {
            return Err(Error::dim("host input size", self.host.spec().input_size(), host_in));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FedOnceOutcome {
    pub model: FedModel,
    pub ledger: CommLedger,
    /// Host training loss after each epoch.
    pub host_trace: Vec<f64>,
    /// NAT loss traces of the guests (empty for PCA guests).
    pub guest_traces: Vec<Vec<f64>>,
    pub noise_multiplier: Option<f64>,
    pub privacy: Option<PrivacyReport>,
}

/// Seed of party `p` under run seed `seed`.
pub fn party_seed(seed: u64, party: usize) -> u64 {
    derive_seed(seed, party as u64)
}

/// `R + N(0, σ_r² I)`, seeded. `σ_r = 0` returns `R` unchanged without
/// drawing.
pub fn add_representation_noise(r: &DenseMatrix, sigma_r: f64, seed: u64) -> Result<DenseMatrix> {
    if !(sigma_r >= 0.0 && sigma_r.is_finite()) {
        return Err(Error::Config(format!(
            "representation noise must be finite and >= 0, got {sigma_r}"
        )));
    }
    if sigma_r == 0.0 {
        return Ok(r.clone());
    }
    let mut rng = rng_for(seed, stream::REPR_NOISE);
    let mut out = r.clone();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma_r * z;
    }
    Ok(out)
}

/// Zeros the representations of the listed guests. `reprs[i]` belongs to
/// party `i + 1`.
pub fn apply_laggy(reprs: &[DenseMatrix], laggy: &[usize]) -> Result<Vec<DenseMatrix>> {
    for &p in laggy {
        if p == 0 {
            return Err(Error::Config("the host (party 0) cannot be laggy".into()));
        }
        if p > reprs.len() {
            return Err(Error::Config(format!("laggy party {p} does not exist")));
        }
    }
    Ok(reprs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if laggy.contains(&(i + 1)) {
                DenseMatrix::zeros(r.rows(), r.cols())
            } else {
                r.clone()
            }
        })
        .collect())
}

fn host_input(x_host: &DenseMatrix, reprs: &[DenseMatrix]) -> Result<DenseMatrix> {
    let mut blocks = vec![x_host];
    blocks.extend(reprs);
    DenseMatrix::hstack(&blocks)
}

/// `(party, q, steps)` of every party that trains with gradient noise.
fn private_budgets(data: &PartitionedDataset, cfg: &RunConfig, sigma: f64) -> Vec<PartyBudget> {
    let n = data.n();
    let guest = PartyBudget {
        party: 0,
        q: cfg.guest.batch_size as f64 / n as f64,
        sigma,
        steps: steps_for_epochs(n, cfg.guest.batch_size, cfg.guest.epochs),
    };
    let host = PartyBudget {
        party: 0,
        q: cfg.host.batch_size as f64 / n as f64,
        sigma,
        steps: steps_for_epochs(n, cfg.host.batch_size, cfg.host.epochs),
    };
    let mut out = vec![host];
    out.extend((1..data.k()).map(|party| PartyBudget { party, ..guest }));
    out
}

fn resolve_sigma(data: &PartitionedDataset, cfg: &RunConfig) -> Result<f64> {
    match (cfg.dp.noise_multiplier, cfg.dp.target_epsilon) {
        (Some(s), _) => Ok(s),
        (None, Some(eps)) => {
            let parties: Vec<(f64, u64)> = private_budgets(data, cfg, 1.0).iter().map(|p| (p.q, p.steps)).collect();
            calibrate_sigma_parties(eps, cfg.dp.delta, &parties)
        }
        (None, None) => Err(Error::Config(
            "private mode needs a noise multiplier or target epsilon".into(),
        )),
    }
}

/// Guests learn representations without labels and send them once; the host
/// trains on its own features plus the representations.
pub fn train_fedonce(data: &PartitionedDataset, cfg: &RunConfig) -> Result<FedOnceOutcome> {
    data.validate()?;
    let labels = data.labels()?;
    let (n, k) = (data.n(), data.k());
    cfg.validate(k, n)?;
    let private = cfg.mode == Mode::L1;
    let sigma = if private { Some(resolve_sigma(data, cfg)?) } else { None };
    let hook_for = |seed: u64| -> Result<Option<DpHook>> {
        match sigma {
            Some(s) => Ok(Some(DpHook::new(
                cfg.dp.clip_norm,
                s,
                cfg.dp.granularity,
                rng_for(seed, stream::DP_NOISE),
            )?)),
            None => Ok(None),
        }
    };

    let d = cfg.guest.repr_dim;
    let mut ledger = CommLedger::new();
    let mut guests = Vec::with_capacity(k - 1);
    let mut reprs = Vec::with_capacity(k - 1);
    let mut guest_traces = Vec::with_capacity(k - 1);
    for j in 1..k {
        let seed = party_seed(cfg.seed, j);
        let x = &data.parties[j];
        let (model, trace) = match cfg.guest.learner {
            GuestLearner::Nat => {
                let spec = MlpSpec::relu(x.cols(), &cfg.guest.hidden, d, OutputActivation::Identity)?;
                let nat_cfg = NatConfig {
                    repr_dim: d,
                    update_freq: cfg.guest.update_freq,
                    epochs: cfg.guest.epochs,
                    batch_size: cfg.guest.batch_size,
                    optimizer: cfg.guest.optimizer,
                    seed,
                };
                let mut hook = hook_for(seed)?;
                let out = nat_train(x, &spec, &nat_cfg, hook.as_mut())?;
                (GuestModel::Nat(out.params), out.loss_trace)
            }
            GuestLearner::Pca => (GuestModel::Pca(pca_fit(x, d)?), Vec::new()),
        };
        let r = add_representation_noise(&model.represent(x)?, cfg.repr_noise, seed)?;
        ledger.record(Phase::Train, j, 0, PayloadKind::Representation, (n * d) as u64);
        guests.push(model);
        reprs.push(r);
        guest_traces.push(trace);
    }
    let reprs = apply_laggy(&reprs, &cfg.laggy)?;

    let host_seed = party_seed(cfg.seed, 0);
    let z = host_input(&data.parties[0], &reprs)?;
    let spec = MlpSpec::relu(
        z.cols(),
        &cfg.host.hidden,
        data.task.output_width(),
        OutputActivation::Identity,
    )?;
    let mut host = spec.init(&mut rng_for(host_seed, stream::INIT));
    let targets = crate::data::label_targets(labels, data.task)?;
    let mut hook = hook_for(host_seed)?;
    let host_trace = fit(
        &mut host,
        &z,
        &targets,
        task_loss(data.task),
        &cfg.host.train_config(),
        &mut rng_for(host_seed, stream::SHUFFLE),
        hook.as_mut(),
    )?;

    let privacy = match sigma {
        Some(s) if s > 0.0 => Some(moments_division_eps(
            &private_budgets(data, cfg, s),
            cfg.dp.delta,
            MomentMode::Exact,
        )?),
        Some(_) => Some(PrivacyReport {
            epsilon: f64::INFINITY,
            delta: cfg.dp.delta,
            method: DivisionMethod::MomentsDivision,
            per_party: private_budgets(data, cfg, 0.0),
        }),
        None => None,
    };
    Ok(FedOnceOutcome {
        model: FedModel {
            guests,
            host,
            repr_dim: d,
            repr_noise: cfg.repr_noise,
            noise_seed: derive_seed(cfg.seed, stream::PREDICT_NOISE),
            laggy: cfg.laggy.clone(),
        },
        ledger,
        host_trace,
        guest_traces,
        noise_multiplier: sigma,
        privacy,
    })
}

/// Guests send `f_θj(x^j)` (with the model's noise and laggy rules) and the
/// host returns its raw outputs (logits for classification).
pub fn predict_fedonce(model: &FedModel, data: &PartitionedDataset, ledger: &mut CommLedger) -> Result<DenseMatrix> {
    model.check_data(data)?;
    let n = data.n();
    let mut reprs = Vec::with_capacity(model.guests.len());
    for (i, g) in model.guests.iter().enumerate() {
        let j = i + 1;
        let r = add_representation_noise(
            &g.represent(&data.parties[j])?,
            model.repr_noise,
            party_seed(model.noise_seed, j),
        )?;
        ledger.record(
            Phase::Predict,
            j,
            0,
            PayloadKind::Representation,
            (n * model.repr_dim) as u64,
        );
        reprs.push(r);
    }
    let reprs = apply_laggy(&reprs, &model.laggy)?;
    predict(&model.host, &host_input(&data.parties[0], &reprs)?)
}

/// Accuracy or RMSE of the model on labelled data.
pub fn evaluate_fedonce(model: &FedModel, data: &PartitionedDataset, ledger: &mut CommLedger) -> Result<f64> {
    let pred = predict_fedonce(model, data, ledger)?;
    metric(data.task, &pred, data.labels()?)
}

#[cfg(test)]
mod tests {
    use super::super::config::{DpSettings, GuestConfig, HostConfig};
    use super::*;
    use crate::data::{make_synthetic, partition_features, SyntheticSpec};
    use crate::nn::OptimizerConfig;

    fn small_data() -> PartitionedDataset {
        let (ds, part) = make_synthetic(&SyntheticSpec::new(60, 8, 2, 3)).unwrap();
        partition_features(&ds, &part).unwrap()
    }

    fn cfg(guest_epochs: usize, host_epochs: usize) -> RunConfig {
        RunConfig {
            mode: Mode::L0,
            guest: GuestConfig {
                learner: GuestLearner::Nat,
                hidden: vec![6],
                repr_dim: 3,
                update_freq: 1,
                epochs: guest_epochs,
                batch_size: 16,
                optimizer: OptimizerConfig::sgd(0.05),
            },
            host: HostConfig {
                hidden: vec![5],
                epochs: host_epochs,
                batch_size: 16,
                optimizer: OptimizerConfig::sgd(0.05),
            },
            dp: DpSettings::default(),
            repr_noise: 0.0,
            laggy: vec![],
            seed: 11,
        }
    }

    #[test]
    fn untrained_run_sends_one_payload() {
        let out = train_fedonce(&small_data(), &cfg(0, 0)).unwrap();
        assert_eq!(out.ledger.len(), 1);
        assert_eq!(out.ledger.total_bytes(), 60 * 3 * 8);
        assert!(out.host_trace.is_empty());
    }

    #[test]
    fn training_prediction_matches_final_loss() {
        let data = small_data();
        let out = train_fedonce(&data, &cfg(2, 3)).unwrap();
        let mut ledger = CommLedger::new();
        let pred = predict_fedonce(&out.model, &data.without_labels(), &mut ledger).unwrap();
        let (loss, _) = crate::nn::loss_and_grad(task_loss(data.task), &pred, &data.targets().unwrap()).unwrap();
        assert!((loss - out.host_trace.last().unwrap()).abs() < 1e-10);
        assert_eq!(ledger.phase_bytes(Phase::Predict), 60 * 3 * 8);
    }

    #[test]
    fn zero_model_gives_constant_predictions() {
        let data = small_data();
        let mut model = train_fedonce(&data, &cfg(0, 0)).unwrap().model;
        model.host = model.host.spec().zeros();
        let pred = predict_fedonce(&model, &data, &mut CommLedger::new()).unwrap();
        assert!(pred.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn representation_noise_properties() {
        let r = DenseMatrix::filled(4, 3, 1.5);
        assert_eq!(add_representation_noise(&r, 0.0, 1).unwrap(), r);
        assert_eq!(
            add_representation_noise(&r, 2.0, 1).unwrap(),
            add_representation_noise(&r, 2.0, 1).unwrap()
        );
        let zeros = DenseMatrix::zeros(1000, 100);
        let noisy = add_representation_noise(&zeros, 3.0, 9).unwrap();
        let v = noisy.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((sd - 3.0).abs() / 3.0 < 0.02, "{sd}");
    }

    #[test]
    fn laggy_rules() {
        let reprs = vec![DenseMatrix::filled(2, 2, 1.0), DenseMatrix::filled(2, 2, 2.0)];
        assert_eq!(apply_laggy(&reprs, &[]).unwrap(), reprs);
        let out = apply_laggy(&reprs, &[2]).unwrap();
        assert_eq!(out[0], reprs[0]);
        assert_eq!(out[1], DenseMatrix::zeros(2, 2));
        assert!(apply_laggy(&reprs, &[0]).is_err());
        assert!(apply_laggy(&reprs, &[3]).is_err());
    }

    #[test]
    fn laggy_guest_still_pays_bytes() {
        let mut c = cfg(1, 1);
        c.laggy = vec![1];
        let out = train_fedonce(&small_data(), &c).unwrap();
        assert_eq!(out.ledger.total_bytes(), 60 * 3 * 8);
        c.laggy = vec![0];
        assert!(matches!(train_fedonce(&small_data(), &c), Err(Error::Config(_))));
    }

    #[test]
    fn private_mode_requires_noise_choice() {
        let mut c = cfg(1, 1);
        c.mode = Mode::L1;
        assert!(train_fedonce(&small_data(), &c).is_err());
        c.dp.noise_multiplier = Some(0.0);
        assert!(train_fedonce(&small_data(), &c).is_err());
        c.dp.allow_zero_noise = true;
        let out = train_fedonce(&small_data(), &c).unwrap();
        assert_eq!(out.privacy.unwrap().epsilon, f64::INFINITY);
        c.dp.noise_multiplier = Some(1.0);
        let out = train_fedonce(&small_data(), &c).unwrap();
        assert!(out.privacy.unwrap().epsilon.is_finite());
    }

    #[test]
    fn calibrated_run_meets_target() {
        let mut c = cfg(2, 2);
        c.mode = Mode::L1;
        c.dp.target_epsilon = Some(3.0);
        let out = train_fedonce(&small_data(), &c).unwrap();
        let eps = out.privacy.unwrap().epsilon;
        assert!(eps <= 3.0 && eps > 2.9, "{eps}");
    }
}
