//! `vfl`: run experiments, communication traces, privacy curves and sweeps
//! from a JSON config.
//!
//! Exit status: 0 on success, 2 for configuration or usage errors, 3 for
//! failures while running.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vfl_core::experiment::{
    cmd_comm_trace, cmd_privacy_curve, cmd_run, cmd_sweep, ExperimentConfig, PrivacyCurveSettings, SweepAxis,
    SweepSettings,
};
use vfl_core::Error;

#[derive(Parser)]
#[command(name = "vfl", version, about = "One-shot vertical federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured method over all seeds.
    Run(Common),
    /// Metric against cumulative bytes for multi-round fine-tuning and SplitNN.
    CommTrace {
        #[command(flatten)]
        common: Common,
        /// Byte budget, replacing comm_trace.budget_bytes.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Privacy loss under moments and simple division for k = 1..k_max.
    PrivacyCurve(Common),
    /// Repeat the run over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// d, alpha, k, epsilon or sigma_r; replaces sweep.axis.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values; replaces sweep.values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

fn parse_axis(s: &str) -> Result<SweepAxis, Error> {
    Ok(match s {
        "d" => SweepAxis::D,
        "alpha" => SweepAxis::Alpha,
        "k" => SweepAxis::K,
        "epsilon" => SweepAxis::Epsilon,
        "sigma_r" => SweepAxis::SigmaR,
        other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
    })
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn setup_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Run(c) => {
            setup_threads(c.threads)?;
            let rows = cmd_run(&load(&c)?, &c.out)?;
            Ok(format!("wrote {} metric rows to {}", rows.len(), c.out.display()))
        }
        Command::CommTrace { common: c, budget } => {
            setup_threads(c.threads)?;
            let rows = cmd_comm_trace(&load(&c)?, &c.out, budget)?;
            Ok(format!("wrote {} trace rows to {}", rows.len(), c.out.display()))
        }
        Command::PrivacyCurve(c) => {
            setup_threads(c.threads)?;
            let text = std::fs::read_to_string(&c.config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", c.config.display())))?;
            let rows = cmd_privacy_curve(&PrivacyCurveSettings::from_json(&text)?, &c.out)?;
            Ok(format!("wrote {} curve rows to {}", rows.len(), c.out.display()))
        }
        Command::Sweep {
            common: c,
            axis,
            values,
        } => {
            setup_threads(c.threads)?;
            let mut cfg = load(&c)?;
            if axis.is_some() || values.is_some() {
                let base = cfg.sweep.clone();
                let axis = match (axis, &base) {
                    (Some(a), _) => parse_axis(&a)?,
                    (None, Some(b)) => b.axis,
                    (None, None) => return Err(Error::Config("--values needs --axis or a sweep section".into())),
                };
                let values = match (values, base) {
                    (Some(v), _) => v,
                    (None, Some(b)) => b.values,
                    (None, None) => return Err(Error::Config("--axis needs --values or a sweep section".into())),
                };
                cfg.sweep = Some(SweepSettings { axis, values });
                cfg.validate()?;
            }
            let rows = cmd_sweep(&cfg, &c.out)?;
            Ok(format!("wrote {} sweep rows to {}", rows.len(), c.out.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
