//! Scenario files: topology, trace source, network model, security
//! configuration and applications for one run.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::synth::{self, PairSpec, RoadSpec};
use crate::apps::FcwParams;
use crate::clock::ClockMode;
use crate::edges::{FixedSite, NetworkModel};
use crate::hetnet::MediumKind;
use crate::model::Position;
use crate::security::{AccessManifest, FlowPolicy};
use crate::trace::{parse_trace, BsmSchedule, TraceError, TraceFormat, DEFAULT_RATE_HZ};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("trace {path}: {source}")]
    Trace { path: String, source: TraceError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run setup: {0}")]
    Setup(String),
    #[error("writing outputs: {0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSpec {
    /// CSV trace; relative paths resolve against the scenario file.
    File { path: PathBuf },
    Road(RoadSpec),
    Pair(PairSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppsConfig {
    /// Forward collision warning on every mobile edge when present.
    #[serde(default)]
    pub fcw: Option<FcwParams>,
    /// Traffic data collection on fixed and system edges.
    #[serde(default = "yes")]
    pub traffic: bool,
}

impl Default for AppsConfig {
    fn default() -> Self {
        Self { fcw: None, traffic: true }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_range() -> f64 {
    300.0
}
fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    pub n_mobile: usize,
    pub n_fixed: usize,
    #[serde(default = "one")]
    pub n_system: usize,
    pub trace: TraceSpec,
    /// Defaults to one site per 600 m road segment, at the segment center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_edges: Option<Vec<FixedSite>>,
    #[serde(default = "default_range")]
    pub range_m: f64,
    #[serde(default = "default_range")]
    pub v2v_range_m: f64,
    #[serde(default)]
    pub network: NetworkModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<FlowPolicy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifests: Option<Vec<AccessManifest>>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub apps: AppsConfig,
    /// Corrupt every Nth DSRC transmission (fault injection).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamper_every: Option<u64>,
}

pub const SYSTEM_EDGE_ID: &str = "s1";

impl Scenario {
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(text)?;
        if let (TraceSpec::File { path }, Some(base)) = (&mut s.trace, base_dir) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, path.parent())
    }

    pub fn duration_ms(&self) -> u64 {
        (self.duration_s * 1000.0).round() as u64
    }

    pub fn fixed_sites(&self) -> Vec<FixedSite> {
        if let Some(sites) = &self.fixed_edges {
            return sites.clone();
        }
        let seg = match &self.trace {
            TraceSpec::Road(r) => r.segment_length_m,
            _ => synth::default_segment(),
        };
        (0..self.n_fixed)
            .map(|k| FixedSite { id: format!("f{}", k + 1), pos: Position::new(seg * (k as f64 + 0.5), 0.0) })
            .collect()
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if self.name.trim().is_empty() {
            errs.push("name must not be empty".to_owned());
        }
        if !(self.duration_s >= 0.0) || !self.duration_s.is_finite() {
            errs.push("duration_s must be a non-negative number".to_owned());
        }
        if self.n_system != 1 {
            errs.push(format!("n_system must be 1, got {}", self.n_system));
        }
        if self.n_mobile > 0 && self.n_fixed == 0 {
            errs.push("n_fixed must be at least 1 when there are mobile edges".to_owned());
        }
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            errs.push("rate_hz must be positive".to_owned());
        }
        for (name, r) in [("range_m", self.range_m), ("v2v_range_m", self.v2v_range_m)] {
            if !(r >= 0.0) {
                errs.push(format!("{name} must be non-negative"));
            }
        }
        if let Some(sites) = &self.fixed_edges {
            if sites.len() != self.n_fixed {
                errs.push(format!("fixed_edges lists {} sites but n_fixed is {}", sites.len(), self.n_fixed));
            }
            let mut seen = HashSet::new();
            for s in sites {
                if crate::model::Topic::raw_for(&s.id).is_err() || s.id.contains('*') {
                    errs.push(format!("fixed edge id {:?} is not usable in topic names", s.id));
                }
                if s.id == SYSTEM_EDGE_ID || !seen.insert(&s.id) {
                    errs.push(format!("duplicate edge id {:?}", s.id));
                }
            }
        }
        if let Err(e) = self.network.validate() {
            errs.push(e.to_string());
        }
        for needed in [MediumKind::Dsrc, MediumKind::Fiber] {
            if !self.network.media.contains_key(&needed) {
                errs.push(format!("network model must configure {needed:?}"));
            }
        }
        for p in self.policies.iter().flatten() {
            if let Err(e) = p.validate() {
                errs.push(format!("policy: {e}"));
            }
        }
        for m in self.manifests.iter().flatten() {
            if let Err(e) = m.validate() {
                errs.push(format!("manifest for {}: {e}", m.subject));
            }
        }
        if let Some(p) = &self.apps.fcw {
            if let Err(e) = p.validate() {
                errs.push(format!("fcw: {e}"));
            }
        }
        match &self.trace {
            TraceSpec::Pair(p) => {
                if self.n_mobile != 2 {
                    errs.push("a pair trace has exactly 2 mobile edges".to_owned());
                }
                if !(p.lead_speed_mps >= 0.0 && p.follow_speed_mps >= 0.0 && p.initial_gap_m >= 0.0) {
                    errs.push("pair speeds and gap must be non-negative".to_owned());
                }
                for b in [p.lead_brake, p.follow_brake].into_iter().flatten() {
                    if !(b.decel_mps2 > 0.0) || !(b.target_mps >= 0.0) {
                        errs.push("brake needs a positive deceleration and non-negative target".to_owned());
                    }
                }
            }
            TraceSpec::Road(r) => {
                if r.lanes == 0 || !(r.segment_length_m > 0.0) || !(r.speed_min_mps >= 0.0) || r.speed_max_mps < r.speed_min_mps
                {
                    errs.push("road needs lanes >= 1, a positive segment length and 0 <= speed_min <= speed_max".to_owned());
                }
            }
            TraceSpec::File { .. } => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    /// Validates, loads or synthesizes the trace, and checks it covers the
    /// topology and duration. Returns the per-vehicle BSM schedule.
    pub fn build_schedule(&self) -> Result<BsmSchedule, ScenarioError> {
        self.validate()?;
        let points = match &self.trace {
            TraceSpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
                parse_trace(&text, TraceFormat::Csv)
                    .map_err(|source| ScenarioError::Trace { path: path.display().to_string(), source })?
            }
            TraceSpec::Road(r) => synth::road_trace(r, self.n_mobile, self.n_fixed, self.duration_s, self.rate_hz),
            TraceSpec::Pair(p) => synth::pair_trace(p, self.duration_s, self.rate_hz),
        };
        let mut schedule = if points.is_empty() {
            BsmSchedule { rate_hz: self.rate_hz, vehicles: Vec::new() }
        } else {
            BsmSchedule::from_points(&points, self.rate_hz)
                .map_err(|source| ScenarioError::Trace { path: "<trace>".into(), source })?
        };
        let end = self.duration_ms();
        schedule.truncate(end);
        let mut errs = Vec::new();
        if schedule.vehicles.len() != self.n_mobile {
            errs.push(format!("trace has {} vehicles but n_mobile is {}", schedule.vehicles.len(), self.n_mobile));
        }
        let period_ms = (1000.0 / self.rate_hz).round() as u64;
        let last = schedule.vehicles.iter().filter_map(|v| v.samples.last()).map(|s| s.t_ms).max();
        if self.n_mobile > 0 && end > 0 && last.is_none_or(|l| l + period_ms < end) {
            errs.push(format!("trace does not cover the {} s duration", self.duration_s));
        }
        if errs.is_empty() {
            Ok(schedule)
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }
}
