//! Scenario harness: synthetic traces, scenario files, the run engine,
//! metrics and sweeps.

mod engine;
pub mod metrics;
pub mod scenario;
mod sweep;
pub mod synth;

pub use engine::{run_link_key, run_scenario, run_scenario_with, EngineEvent, LiveMetrics, RunOptions, RunOutcome, DRAIN_MS};
pub use metrics::{
    emit_report, reports_csv, summarize, summarize_samples, throughput_mbps, ClassStats, LatencySample, MetricsError,
    MetricsReport, PassFlags, ReportFormat, SampleClass, Thresholds, CSV_HEADER, MOBILITY_LATENCY_MS,
    SAFETY_LATENCY_MS,
};
pub use scenario::{AppsConfig, Scenario, ScenarioError, TraceSpec, SYSTEM_EDGE_ID};
pub use sweep::{run_sweep, sweep_point, SweepResult, DEFAULT_SEEDS};
pub use synth::{Brake, PairSpec, RoadSpec};
