//! Latency samples, summary statistics and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MsgId;

/// Safety applications must answer within this many milliseconds.
pub const SAFETY_LATENCY_MS: f64 = 200.0;
/// Mobility applications must deliver within this many milliseconds.
pub const MOBILITY_LATENCY_MS: f64 = 1000.0;

pub const CSV_HEADER: &str =
    "scenario,class,n_mobile,n_fixed,samples,min_ms,p25_ms,p50_ms,avg_ms,p75_ms,max_ms,throughput_mbps,warnings,quarantined,dropped,pass";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to summarize")]
    Empty,
    #[error("duration must be positive")]
    ZeroDuration,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleClass {
    Delivery,
    Fcw,
}

impl SampleClass {
    pub fn name(self) -> &'static str {
        match self {
            SampleClass::Delivery => "delivery",
            SampleClass::Fcw => "fcw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencySample {
    pub msg_id: MsgId,
    pub class: SampleClass,
    pub t_gen_ms: u64,
    pub t_done_ms: u64,
    pub latency_ms: u64,
}

impl LatencySample {
    /// Panics if `t_done_ms < t_gen_ms`; the virtual clock never runs backwards.
    pub fn new(msg_id: MsgId, class: SampleClass, t_gen_ms: u64, t_done_ms: u64) -> Self {
        let latency_ms = t_done_ms.checked_sub(t_gen_ms).expect("sample completes before it was generated");
        Self { msg_id, class, t_gen_ms, t_done_ms, latency_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub samples: usize,
    pub min_ms: f64,
    pub p25_ms: f64,
    pub p50_ms: f64,
    pub avg_ms: f64,
    pub p75_ms: f64,
    pub max_ms: f64,
}

/// Linear interpolation between order statistics at rank `(n - 1) q`.
pub fn quantile_inclusive(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(latencies_ms: &[f64]) -> Result<ClassStats, MetricsError> {
    if latencies_ms.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut v = latencies_ms.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(ClassStats {
        samples: n,
        min_ms: v[0],
        p25_ms: quantile_inclusive(&v, 0.25),
        p50_ms: quantile_inclusive(&v, 0.5),
        avg_ms: v.iter().sum::<f64>() / n as f64,
        p75_ms: quantile_inclusive(&v, 0.75),
        max_ms: v[n - 1],
    })
}

pub fn summarize_samples(samples: &[LatencySample]) -> Result<ClassStats, MetricsError> {
    summarize(&samples.iter().map(|s| s.latency_ms as f64).collect::<Vec<_>>())
}

/// Payload megabits per second.
pub fn throughput_mbps(delivered_bytes: u64, duration_s: f64) -> Result<f64, MetricsError> {
    if !(duration_s > 0.0) {
        return Err(MetricsError::ZeroDuration);
    }
    Ok(delivered_bytes as f64 * 8.0 / (duration_s * 1e6))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub safety_ms: f64,
    pub mobility_ms: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { safety_ms: SAFETY_LATENCY_MS, mobility_ms: MOBILITY_LATENCY_MS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassFlags {
    /// Every delivery sample is under the mobility threshold.
    pub mobility: bool,
    /// FCW average and maximum are under the safety threshold.
    pub safety: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub n_mobile: usize,
    pub n_fixed: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub bsms_generated: u64,
    pub classes: BTreeMap<SampleClass, ClassStats>,
    pub throughput_mbps: f64,
    pub warnings_emitted: u64,
    pub quarantined: u64,
    pub dropped_by_channel: u64,
    pub thresholds: Thresholds,
    pub pass: PassFlags,
}

impl MetricsReport {
    /// Fills the statistics and pass flags from raw samples.
    pub fn set_samples(&mut self, delivery: &[LatencySample], fcw: &[LatencySample]) {
        self.classes.clear();
        for (class, s) in [(SampleClass::Delivery, delivery), (SampleClass::Fcw, fcw)] {
            if let Ok(stats) = summarize_samples(s) {
                self.classes.insert(class, stats);
            }
        }
        let th = self.thresholds;
        self.pass = PassFlags {
            mobility: self.classes.get(&SampleClass::Delivery).is_none_or(|s| s.max_ms < th.mobility_ms),
            safety: self.classes.get(&SampleClass::Fcw).is_none_or(|s| s.max_ms < th.safety_ms && s.avg_ms < th.safety_ms),
        };
    }

    pub fn class_pass(&self, class: SampleClass) -> bool {
        match class {
            SampleClass::Delivery => self.pass.mobility,
            SampleClass::Fcw => self.pass.safety,
        }
    }

    /// CSV data rows, one per class with samples.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (class, s) in &self.classes {
            writeln!(
                out,
                "{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.6},{},{},{},{}",
                self.scenario,
                class.name(),
                self.n_mobile,
                self.n_fixed,
                s.samples,
                s.min_ms,
                s.p25_ms,
                s.p50_ms,
                s.avg_ms,
                s.p75_ms,
                s.max_ms,
                self.throughput_mbps,
                self.warnings_emitted,
                self.quarantined,
                self.dropped_by_channel,
                self.class_pass(*class),
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Header plus the rows of every report.
pub fn reports_csv(reports: &[MetricsReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }

    pub fn render(self, report: &MetricsReport) -> Result<String, MetricsError> {
        Ok(match self {
            ReportFormat::Csv => reports_csv(std::slice::from_ref(report)),
            ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        })
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (expected csv or json)")),
        }
    }
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, format.render(report)?)?;
    Ok(())
}
