//! Config-driven experiments: single runs, communication traces, privacy
//! curves and parameter sweeps, all written as CSV.

pub mod config;
pub mod runner;

pub use config::{
    CommTraceSettings, DatasetSource, ExperimentConfig, Method, PrivacyCurveSettings, Protocol, SplitSettings,
    SweepAxis, SweepSettings,
};
pub use runner::{
    cmd_comm_trace, cmd_privacy_curve, cmd_run, cmd_sweep, run_seed, MetricsRow, SweepRow, TraceRow, METRICS_HEADER,
    SWEEP_HEADER, TRACE_HEADER,
};
