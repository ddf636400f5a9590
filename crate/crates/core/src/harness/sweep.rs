//! Repeats a template scenario over a list of mobile-edge counts and seeds.

use std::path::Path;

use rayon::prelude::*;

use super::engine::{run_scenario_with, RunOptions};
use super::metrics::{reports_csv, LatencySample, MetricsReport};
use super::scenario::{Scenario, ScenarioError};

pub const DEFAULT_SEEDS: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// One pooled report per mobile count, in input order.
    pub pooled: Vec<MetricsReport>,
    /// Every individual run, grouped by count then seed.
    pub runs: Vec<MetricsReport>,
}

impl SweepResult {
    pub fn throughputs(&self) -> Vec<f64> {
        self.pooled.iter().map(|r| r.throughput_mbps).collect()
    }
}

/// Derives the scenario for one sweep point.
pub fn sweep_point(template: &Scenario, n_mobile: usize, n_fixed: usize, seed: u64) -> Scenario {
    let mut s = template.clone();
    s.n_mobile = n_mobile;
    s.n_fixed = n_fixed;
    s.seed = seed;
    s
}

/// Runs `seeds` seeds (template seed, +1, ...) for every count. All points
/// are validated before any run starts. With `out` set, writes `sweep.csv`
/// with pooled rows and one CSV per run under `runs/`.
pub fn run_sweep(
    template: &Scenario,
    counts: &[usize],
    n_fixed: usize,
    seeds: u64,
    out: Option<&Path>,
) -> Result<SweepResult, ScenarioError> {
    if counts.is_empty() || seeds == 0 {
        return Err(ScenarioError::Invalid(vec!["sweep needs at least one count and one seed".into()]));
    }
    let points: Vec<Scenario> = counts
        .iter()
        .flat_map(|&n| (0..seeds).map(move |k| sweep_point(template, n, n_fixed, template.seed.wrapping_add(k))))
        .collect();
    for p in &points {
        p.validate()?;
    }
    let outcomes = points
        .par_iter()
        .map(|p| run_scenario_with(p, &RunOptions::default(), &mut |_| {}).map(|o| (o.report, o.delivery, o.fcw)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut pooled = Vec::new();
    for group in outcomes.chunks(seeds as usize) {
        pooled.push(pool(group));
    }
    let runs: Vec<MetricsReport> = outcomes.into_iter().map(|(r, _, _)| r).collect();

    if let Some(dir) = out {
        let err = |e: std::io::Error| ScenarioError::Output(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir.join("runs")).map_err(err)?;
        std::fs::write(dir.join("sweep.csv"), reports_csv(&pooled)).map_err(err)?;
        for r in &runs {
            let name = format!("{}_m{}_f{}_s{}.csv", r.scenario, r.n_mobile, r.n_fixed, r.seed);
            std::fs::write(dir.join("runs").join(name), reports_csv(std::slice::from_ref(r))).map_err(err)?;
        }
    }
    Ok(SweepResult { pooled, runs })
}

/// Concatenates samples, averages throughput, sums counters, ANDs pass flags.
fn pool(group: &[(MetricsReport, Vec<LatencySample>, Vec<LatencySample>)]) -> MetricsReport {
    let mut out = group[0].0.clone();
    let n = group.len() as f64;
    out.throughput_mbps = group.iter().map(|g| g.0.throughput_mbps).sum::<f64>() / n;
    out.bsms_generated = group.iter().map(|g| g.0.bsms_generated).sum();
    out.warnings_emitted = group.iter().map(|g| g.0.warnings_emitted).sum();
    out.quarantined = group.iter().map(|g| g.0.quarantined).sum();
    out.dropped_by_channel = group.iter().map(|g| g.0.dropped_by_channel).sum();
    let delivery: Vec<LatencySample> = group.iter().flat_map(|g| g.1.iter().copied()).collect();
    let fcw: Vec<LatencySample> = group.iter().flat_map(|g| g.2.iter().copied()).collect();
    out.set_samples(&delivery, &fcw);
    out.pass.mobility &= group.iter().all(|g| g.0.pass.mobility);
    out.pass.safety &= group.iter().all(|g| g.0.pass.safety);
    out
}
