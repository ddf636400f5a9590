//! Heterogeneous-network services: per-medium statistics over a sliding
//! sample window, immutable metadata snapshots, and requirement-driven
//! medium selection.
//!
//! Selection keeps the available media whose average latency and delivery
//! ratio meet the requirement and picks the lowest average latency, breaking
//! ties by the fixed priority DSRC > Fiber > WiFi > LTE. When nothing
//! qualifies it falls back to the lowest-latency available medium and flags
//! `requirement_met = false`. Signal strength is reported, not used.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HetNetError {
    #[error("negative latency sample {0}")]
    NegativeLatency(f64),
    #[error("no communication medium available")]
    NoMediumAvailable,
    #[error("invalid requirement: {0}")]
    BadRequirement(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MediumKind {
    #[serde(rename = "DSRC")]
    Dsrc,
    WiFi,
    #[serde(rename = "LTE")]
    Lte,
    Fiber,
}

impl MediumKind {
    pub const ALL: [MediumKind; 4] = [MediumKind::Dsrc, MediumKind::WiFi, MediumKind::Lte, MediumKind::Fiber];

    /// Lower is preferred on latency ties.
    pub fn priority(self) -> u8 {
        match self {
            MediumKind::Dsrc => 0,
            MediumKind::Fiber => 1,
            MediumKind::WiFi => 2,
            MediumKind::Lte => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumStats {
    pub kind: MediumKind,
    /// Latency fields are `None` until a delivered sample is in the window.
    pub lat_min_ms: Option<f64>,
    pub lat_avg_ms: Option<f64>,
    pub lat_max_ms: Option<f64>,
    pub loss_rate: f64,
    pub signal_strength_dbm: f64,
    pub available: bool,
    pub sample_count: usize,
}

impl MediumStats {
    fn empty(kind: MediumKind, available: bool) -> Self {
        Self {
            kind,
            lat_min_ms: None,
            lat_avg_ms: None,
            lat_max_ms: None,
            loss_rate: 0.0,
            signal_strength_dbm: 0.0,
            available,
            sample_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppRequirement {
    pub max_latency_ms: f64,
    pub min_reliability: f64,
}

impl AppRequirement {
    pub fn new(max_latency_ms: f64, min_reliability: f64) -> Result<Self, HetNetError> {
        if !(max_latency_ms > 0.0) {
            return Err(HetNetError::BadRequirement("max_latency_ms must be positive"));
        }
        if !(0.0..=1.0).contains(&min_reliability) {
            return Err(HetNetError::BadRequirement("min_reliability must be in [0, 1]"));
        }
        Ok(Self { max_latency_ms, min_reliability })
    }

    /// Safety-application requirement: 200 ms.
    pub fn safety() -> Self {
        Self { max_latency_ms: 200.0, min_reliability: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataSnapshot {
    pub snapshot_id: u64,
    pub t_ms: u64,
    pub media: BTreeMap<MediumKind, MediumStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub medium: MediumKind,
    pub requirement_met: bool,
    pub decision_time_ms: f64,
    pub snapshot_id: u64,
}

fn qualifies(s: &MediumStats, req: &AppRequirement) -> bool {
    s.available && s.lat_avg_ms.is_some_and(|l| l <= req.max_latency_ms) && 1.0 - s.loss_rate >= req.min_reliability
}

fn rank(s: &MediumStats) -> (f64, u8) {
    (s.lat_avg_ms.unwrap_or(f64::INFINITY), s.kind.priority())
}

/// Pure selection over a snapshot.
pub fn select_medium(req: &AppRequirement, snap: &MetadataSnapshot) -> Result<SelectionResult, HetNetError> {
    let started = Instant::now();
    let best = |filter: &dyn Fn(&MediumStats) -> bool| {
        snap.media.values().filter(|s| filter(s)).min_by(|a, b| rank(a).partial_cmp(&rank(b)).expect("latencies are not NaN"))
    };
    let (chosen, met) = match best(&|s| qualifies(s, req)) {
        Some(s) => (s, true),
        None => (best(&|s| s.available).ok_or(HetNetError::NoMediumAvailable)?, false),
    };
    Ok(SelectionResult {
        medium: chosen.kind,
        requirement_met: met,
        decision_time_ms: started.elapsed().as_secs_f64() * 1e3,
        snapshot_id: snap.snapshot_id,
    })
}

#[derive(Debug, Clone)]
struct Window {
    capacity: usize,
    samples: VecDeque<Option<f64>>,
    last_signal_dbm: f64,
}

impl Window {
    fn push(&mut self, latency: Option<f64>, signal_dbm: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(latency);
        self.last_signal_dbm = signal_dbm;
    }

    fn stats(&self, kind: MediumKind, available: bool) -> MediumStats {
        let mut s = MediumStats::empty(kind, available);
        s.sample_count = self.samples.len();
        s.signal_strength_dbm = self.last_signal_dbm;
        if self.samples.is_empty() {
            return s;
        }
        let (mut n, mut sum, mut lo, mut hi, mut lost) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for l in &self.samples {
            match l {
                Some(l) => {
                    n += 1;
                    sum += l;
                    lo = lo.min(*l);
                    hi = hi.max(*l);
                }
                None => lost += 1,
            }
        }
        s.loss_rate = lost as f64 / self.samples.len() as f64;
        if n > 0 {
            // clamp guards the avg against summation rounding
            let avg = (sum / n as f64).clamp(lo, hi);
            s.lat_min_ms = Some(lo);
            s.lat_avg_ms = Some(avg);
            s.lat_max_ms = Some(hi);
        }
        s
    }
}

struct MonitorState {
    windows: BTreeMap<MediumKind, Window>,
    version: u64,
    t_ms: u64,
    cached: Option<Arc<MetadataSnapshot>>,
}

/// Background statistics monitor. Writers update under a lock; readers take
/// immutable snapshots and never wait on selection.
pub struct HetNetMonitor {
    available: BTreeMap<MediumKind, bool>,
    state: RwLock<MonitorState>,
}

impl HetNetMonitor {
    pub fn new(available: &[MediumKind]) -> Self {
        Self::with_window(available, DEFAULT_WINDOW)
    }

    pub fn with_window(available: &[MediumKind], window: usize) -> Self {
        let avail = MediumKind::ALL.iter().map(|k| (*k, available.contains(k))).collect();
        let windows = MediumKind::ALL
            .iter()
            .map(|k| (*k, Window { capacity: window.max(1), samples: VecDeque::new(), last_signal_dbm: 0.0 }))
            .collect();
        Self { available: avail, state: RwLock::new(MonitorState { windows, version: 0, t_ms: 0, cached: None }) }
    }

    pub fn is_available(&self, kind: MediumKind) -> bool {
        self.available[&kind]
    }

    /// Records one transmission outcome without computing statistics.
    pub fn record(&self, kind: MediumKind, latency_sample_ms: f64, delivered: bool, signal_dbm: f64, t_ms: u64) -> Result<(), HetNetError> {
        if delivered && !(latency_sample_ms >= 0.0) {
            return Err(HetNetError::NegativeLatency(latency_sample_ms));
        }
        let mut st = self.state.write();
        st.windows.get_mut(&kind).expect("all kinds present").push(delivered.then_some(latency_sample_ms), signal_dbm);
        st.version += 1;
        st.t_ms = st.t_ms.max(t_ms);
        st.cached = None;
        Ok(())
    }

    pub fn update_stats(&self, kind: MediumKind, latency_sample_ms: f64, delivered: bool, signal_dbm: f64) -> Result<MediumStats, HetNetError> {
        self.record(kind, latency_sample_ms, delivered, signal_dbm, 0)?;
        Ok(self.state.read().windows[&kind].stats(kind, self.available[&kind]))
    }

    /// Snapshot of all media. Unchanged monitors return equal snapshots.
    pub fn metadata(&self) -> Arc<MetadataSnapshot> {
        if let Some(s) = self.state.read().cached.clone() {
            return s;
        }
        let mut st = self.state.write();
        let snap = Arc::new(MetadataSnapshot {
            snapshot_id: st.version,
            t_ms: st.t_ms,
            media: st.windows.iter().map(|(k, w)| (*k, w.stats(*k, self.available[k]))).collect(),
        });
        st.cached = Some(snap.clone());
        snap
    }

    pub fn select(&self, req: &AppRequirement) -> Result<SelectionResult, HetNetError> {
        select_medium(req, &self.metadata())
    }
}
