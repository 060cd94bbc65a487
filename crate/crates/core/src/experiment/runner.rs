use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method, PrivacyCurveSettings, SweepAxis};
use crate::data::{metric_name, partition_columns, train_test_split, PartitionSpec};
use crate::dp::{curve_csv, privacy_curve, steps_for_epochs, CurveRow};
use crate::error::{Error, Result};
use crate::fed::fedonce::evaluate_fedonce;
use crate::fed::{
    finetune_multiround, save_model, train_combine, train_fedonce, train_solo, train_splitnn, CommLedger, FedModel,
    Mode, PartitionedDataset, Phase, TracePoint,
};

pub const METRICS_HEADER: &str = "experiment,seed,method,host,bytes,epoch,metric,value";
pub const TRACE_HEADER: &str = "method,epoch,bytes,metric,mean,std,seeds";
pub const SWEEP_HEADER: &str = "axis,value,method,host,metric,mean,std,seeds";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub seed: u64,
    pub method: Method,
    /// Original index of the party acting as host.
    pub host: usize,
    /// Cumulative training-phase bytes exchanged.
    pub bytes: u64,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub method: Method,
    pub epoch: usize,
    pub bytes: u64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub method: Method,
    pub host: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Outputs of one (host, seed) cell.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub rows: Vec<MetricsRow>,
    /// Ledger of the non-private one-shot run (training plus test
    /// prediction), or the private one if that is all that ran.
    pub ledger: Option<CommLedger>,
    pub model: Option<FedModel>,
}

fn csv_string<T: Serialize>(rows: &[T], header: &str) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(format!("csv output: {e}"));
    w.write_record(header.split(',')).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn write(out: &Path, name: &str, text: &str) -> Result<()> {
    crate::data::io::write_text(&out.join(name), text)
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// `(host id, dataset with that host as party 0)` for every host the config
/// asks for.
fn prepare(cfg: &ExperimentConfig) -> Result<Vec<(usize, PartitionedDataset)>> {
    let raw = cfg.load_dataset()?;
    let groups = partition_columns(&raw, &cfg.partition_spec())?;
    let hosts: Vec<usize> = if cfg.host_rotation {
        (0..groups.len()).collect()
    } else {
        vec![0]
    };
    hosts
        .into_iter()
        .map(|h| {
            let mut order = vec![groups[h].clone()];
            order.extend(
                groups
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| *p != h)
                    .map(|(_, g)| g.clone()),
            );
            Ok((h, PartitionedDataset::from_groups(&raw, &order)?))
        })
        .collect()
}

fn split_normalize(
    cfg: &ExperimentConfig,
    data: &PartitionedDataset,
    seed: u64,
) -> Result<(PartitionedDataset, PartitionedDataset)> {
    let (tr, te) = train_test_split(data.n(), cfg.test_fraction, seed)?;
    data.select_rows(&tr)
        .normalize_with(&data.select_rows(&te), cfg.normalize)
}

fn trace_rows(
    cfg: &ExperimentConfig,
    seed: u64,
    host: usize,
    method: Method,
    metric: &str,
    trace: &[TracePoint],
) -> Vec<MetricsRow> {
    let row = |t: &TracePoint, name: &str, value: f64| MetricsRow {
        experiment: cfg.id.clone(),
        seed,
        method,
        host,
        bytes: t.bytes,
        epoch: t.epoch,
        metric: name.into(),
        value,
    };
    trace
        .iter()
        .flat_map(|t| [row(t, metric, t.metric), row(t, "train_loss", t.loss)])
        .collect()
}

/// Every configured method for one seed with party `host` as host.
pub fn run_seed(cfg: &ExperimentConfig, data: &PartitionedDataset, host: usize, seed: u64) -> Result<SeedResult> {
    let (train, test) = split_normalize(cfg, data, seed)?;
    let name = metric_name(data.task);
    let mut methods = cfg.methods.clone();
    methods.sort();
    let mut rows = Vec::new();
    let mut l0_model: Option<FedModel> = None;
    let mut ledger = None;
    let row = |method: Method, bytes: u64, epoch: usize, metric: &str, value: f64| MetricsRow {
        experiment: cfg.id.clone(),
        seed,
        method,
        host,
        bytes,
        epoch,
        metric: metric.into(),
        value,
    };
    let host_epochs = cfg.protocol.host.epochs;
    for method in methods {
        match method {
            Method::FedonceL0 | Method::FedonceL1 => {
                let mode = if method == Method::FedonceL0 {
                    Mode::L0
                } else {
                    Mode::L1
                };
                let out = train_fedonce(&train, &cfg.protocol.run_config(mode, seed))?;
                let bytes = out.ledger.phase_bytes(Phase::Train);
                let mut run_ledger = out.ledger.clone();
                let value = evaluate_fedonce(&out.model, &test, &mut run_ledger)?;
                rows.push(row(method, bytes, host_epochs, name, value));
                if let Some(loss) = out.host_trace.last() {
                    rows.push(row(method, bytes, host_epochs, "train_loss", *loss));
                }
                if let (Some(sigma), Some(report)) = (out.noise_multiplier, &out.privacy) {
                    rows.push(row(method, bytes, host_epochs, "noise_multiplier", sigma));
                    rows.push(row(method, bytes, host_epochs, "epsilon", report.epsilon));
                }
                if mode == Mode::L0 || ledger.is_none() {
                    ledger = Some(run_ledger);
                }
                // The saved model is the L0 one when both modes run.
                if mode == Mode::L0 || (l0_model.is_none() && cfg.save_model) {
                    l0_model = Some(out.model);
                }
            }
            Method::Multiround => {
                let model = l0_model
                    .as_ref()
                    .ok_or_else(|| Error::Config("multiround needs fedonce_l0".into()))?;
                let split = cfg
                    .split
                    .ok_or_else(|| Error::Config("multiround needs a split section".into()))?;
                let (_, _, trace) = finetune_multiround(model, &train, Some(&test), &split.split_config(seed))?;
                rows.extend(trace_rows(cfg, seed, host, method, name, &trace));
            }
            Method::Splitnn => {
                let split = cfg
                    .split
                    .ok_or_else(|| Error::Config("splitnn needs a split section".into()))?;
                let p = &cfg.protocol;
                let (_, _, trace) = train_splitnn(
                    &train,
                    Some(&test),
                    &p.guest.hidden,
                    p.guest.repr_dim,
                    &p.host.hidden,
                    &split.split_config(seed),
                )?;
                rows.extend(trace_rows(cfg, seed, host, method, name, &trace));
            }
            Method::Solo => {
                let m = train_solo(
                    &train,
                    0,
                    &cfg.protocol.host.hidden,
                    &cfg.protocol.host.train_config(),
                    seed,
                )?;
                rows.push(row(
                    method,
                    0,
                    host_epochs,
                    name,
                    m.metric(&test.parties[0], test.labels()?)?,
                ));
            }
            Method::Combine => {
                let m = train_combine(
                    &train,
                    &cfg.protocol.host.hidden,
                    &cfg.protocol.host.train_config(),
                    seed,
                )?;
                rows.push(row(
                    method,
                    0,
                    host_epochs,
                    name,
                    m.metric(&test.combined()?, test.labels()?)?,
                ));
            }
        }
    }
    Ok(SeedResult {
        rows,
        ledger,
        model: if cfg.save_model { l0_model } else { None },
    })
}

/// All (host, seed) cells, in host-then-seed order.
fn run_all(cfg: &ExperimentConfig) -> Result<Vec<(usize, u64, SeedResult)>> {
    let prepared = prepare(cfg)?;
    let jobs: Vec<(usize, &PartitionedDataset, u64)> = prepared
        .iter()
        .flat_map(|(h, d)| cfg.seeds.iter().map(move |&s| (*h, d, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(h, d, s)| Ok((h, s, run_seed(cfg, d, h, s)?)))
        .collect()
}

/// Runs every method over all seeds (and hosts, when rotating). Writes
/// `resolved_config.json`, `metrics.csv`, one ledger CSV per cell and, if
/// asked, one model file per cell.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    create_out(out)?;
    write(out, "resolved_config.json", &cfg.resolved().to_json())?;
    let results = run_all(cfg)?;
    let mut rows = Vec::new();
    for (h, s, r) in results {
        if let Some(l) = &r.ledger {
            write(out, &format!("ledger_host{h}_seed{s}.csv"), &l.to_csv()?)?;
        }
        if let Some(m) = &r.model {
            save_model(m, out.join(format!("model_host{h}_seed{s}.bin")))?;
        }
        rows.extend(r.rows);
    }
    write(out, "metrics.csv", &csv_string(&rows, METRICS_HEADER)?)?;
    Ok(rows)
}

/// Arithmetic mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Metric-versus-bytes curves of multi-round fine-tuning (starting from the
/// one-shot model) and SplitNN, each run until the byte budget is spent.
pub fn cmd_comm_trace(cfg: &ExperimentConfig, out: &Path, budget: Option<u64>) -> Result<Vec<TraceRow>> {
    cfg.validate()?;
    let budget = budget
        .or(cfg.comm_trace.map(|c| c.budget_bytes))
        .ok_or_else(|| Error::Config("comm-trace needs comm_trace.budget_bytes".into()))?;
    let split = cfg
        .split
        .ok_or_else(|| Error::Config("comm-trace needs a split section".into()))?;
    let prepared = prepare(cfg)?;
    let data = &prepared[0].1;
    let n_train = data.n() - (data.n() as f64 * cfg.test_fraction).round() as usize;
    let d = cfg.protocol.guest.repr_dim as u64;
    let one_shot = (data.k() as u64 - 1) * n_train as u64 * d * 8;
    let per_epoch = 2 * one_shot;
    if budget <= one_shot {
        return Err(Error::Config(format!(
            "byte budget {budget} does not exceed the one-shot cost {one_shot}"
        )));
    }
    let rounds = ((budget - one_shot) / per_epoch) as usize;
    let split_epochs = (budget / per_epoch) as usize;
    create_out(out)?;
    write(out, "resolved_config.json", &cfg.resolved().to_json())?;

    let traces: Vec<(Vec<TracePoint>, Vec<TracePoint>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (train, test) = split_normalize(cfg, data, seed)?;
            let base = train_fedonce(&train, &cfg.protocol.run_config(Mode::L0, seed))?;
            let mut ft = split.split_config(seed);
            ft.epochs = rounds;
            let (_, _, multi) = finetune_multiround(&base.model, &train, Some(&test), &ft)?;
            let p = &cfg.protocol;
            let mut sp = split.split_config(seed);
            sp.epochs = split_epochs;
            let (_, _, snn) = train_splitnn(
                &train,
                Some(&test),
                &p.guest.hidden,
                p.guest.repr_dim,
                &p.host.hidden,
                &sp,
            )?;
            Ok((multi, snn))
        })
        .collect::<Result<_>>()?;

    let name = metric_name(data.task).to_string();
    let mut rows = Vec::new();
    for (method, pick) in [(Method::Multiround, 0usize), (Method::Splitnn, 1usize)] {
        let len = if pick == 0 { rounds + 1 } else { split_epochs + 1 };
        for e in 0..len {
            let points: Vec<&TracePoint> = traces
                .iter()
                .map(|t| if pick == 0 { &t.0[e] } else { &t.1[e] })
                .collect();
            let (mean, std) = mean_std(&points.iter().map(|p| p.metric).collect::<Vec<_>>());
            rows.push(TraceRow {
                method,
                epoch: e,
                bytes: points[0].bytes,
                metric: name.clone(),
                mean,
                std,
                seeds: points.len(),
            });
        }
    }
    write(out, "comm_trace.csv", &csv_string(&rows, TRACE_HEADER)?)?;
    Ok(rows)
}

/// `ε` under moments and simple division for `k = 1..=k_max` identical
/// parties. Writes `privacy_curve.csv`.
pub fn cmd_privacy_curve(pc: &PrivacyCurveSettings, out: &Path) -> Result<Vec<CurveRow>> {
    pc.validate()?;
    let q = pc.batch_size as f64 / pc.n as f64;
    let steps = steps_for_epochs(pc.n, pc.batch_size, pc.epochs);
    let ks: Vec<usize> = (1..=pc.k_max).collect();
    let rows = privacy_curve(q, pc.sigma, steps, pc.delta, &ks)?;
    create_out(out)?;
    write(out, "privacy_curve.csv", &curve_csv(&rows))?;
    Ok(rows)
}

fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, v: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    c.sweep = None;
    match axis {
        SweepAxis::D => c.protocol.guest.repr_dim = v as usize,
        SweepAxis::Alpha => match &mut c.partition {
            Some(PartitionSpec::Biased { host_share, .. }) => *host_share = v,
            _ => return Err(Error::Config("an alpha sweep needs a biased partition".into())),
        },
        SweepAxis::K => match &mut c.dataset {
            super::config::DatasetSource::Synthetic(s) => {
                s.k = v as usize;
                c.partition = None;
            }
            _ => return Err(Error::Config("a k sweep needs a synthetic dataset".into())),
        },
        SweepAxis::Epsilon => {
            c.protocol.dp.target_epsilon = Some(v);
            c.protocol.dp.noise_multiplier = None;
        }
        SweepAxis::SigmaR => c.protocol.repr_noise = v,
    }
    c.validate()?;
    Ok(c)
}

/// One result group per axis value: the final test metric of every method,
/// as mean and sample std over seeds.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a sweep section".into()))?;
    let cells = sweep
        .values
        .iter()
        .map(|&v| apply_axis(cfg, sweep.axis, v))
        .collect::<Result<Vec<_>>>()?;
    create_out(out)?;
    write(out, "resolved_config.json", &cfg.resolved().to_json())?;
    let mut rows = Vec::new();
    for (&value, cell) in sweep.values.iter().zip(&cells) {
        let results = run_all(cell)?;
        let task = cell.load_dataset()?.task;
        let name = metric_name(task);
        let mut methods = cell.methods.clone();
        methods.sort();
        let mut hosts: Vec<usize> = results.iter().map(|r| r.0).collect();
        hosts.dedup();
        for &host in &hosts {
            for &method in &methods {
                for metric in [name, "epsilon"] {
                    let finals: Vec<f64> = results
                        .iter()
                        .filter(|r| r.0 == host)
                        .filter_map(|r| {
                            r.2.rows
                                .iter()
                                .filter(|m| m.method == method && m.metric == metric)
                                .max_by_key(|m| m.epoch)
                                .map(|m| m.value)
                        })
                        .collect();
                    if finals.is_empty() {
                        continue;
                    }
                    let (mean, std) = mean_std(&finals);
                    rows.push(SweepRow {
                        axis: sweep.axis,
                        value,
                        method,
                        host,
                        metric: metric.into(),
                        mean,
                        std,
                        seeds: finals.len(),
                    });
                }
            }
        }
    }
    write(out, "sweep.csv", &csv_string(&rows, SWEEP_HEADER)?)?;
    Ok(rows)
}
