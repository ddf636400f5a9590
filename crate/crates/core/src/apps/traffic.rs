//! Traffic data collection: per-fixed-edge window records (Sub-App 1) merged
//! into network snapshots at the system edge (Sub-App 2).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::AppError;
use crate::model::Bsm;

/// Aggregation window length, aligned to scenario-clock seconds.
pub const WINDOW_MS: u64 = 1000;

/// Window `[t0, t1)` containing `t_ms`.
pub fn window_of(t_ms: u64) -> (u64, u64) {
    let t0 = t_ms / WINDOW_MS * WINDOW_MS;
    (t0, t0 + WINDOW_MS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficRecord {
    pub fixed_edge_id: String,
    pub t0_ms: u64,
    pub t1_ms: u64,
    pub vehicle_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_speed_mps: Option<f64>,
    pub bsm_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSnapshot {
    pub t0_ms: u64,
    pub t1_ms: u64,
    pub records: Vec<TrafficRecord>,
    pub total_vehicle_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_speed_mps: Option<f64>,
}

pub fn subapp1_collect(bsms: &[Bsm], window: (u64, u64), edge_id: &str) -> Result<TrafficRecord, AppError> {
    let (t0_ms, t1_ms) = window;
    if t0_ms >= t1_ms {
        return Err(AppError::BadInput("empty window"));
    }
    if let Some(b) = bsms.iter().find(|b| !(t0_ms..t1_ms).contains(&b.t_generated_ms)) {
        return Err(AppError::OutsideWindow { t_ms: b.t_generated_ms, t0_ms, t1_ms });
    }
    let vehicles: HashSet<&str> = bsms.iter().map(|b| b.vehicle_id.as_str()).collect();
    let mean = (!bsms.is_empty()).then(|| bsms.iter().map(|b| b.speed_mps).sum::<f64>() / bsms.len() as f64);
    Ok(TrafficRecord {
        fixed_edge_id: edge_id.to_owned(),
        t0_ms,
        t1_ms,
        vehicle_count: vehicles.len() as u64,
        mean_speed_mps: mean,
        bsm_count: bsms.len() as u64,
    })
}

/// Merges one window's records. Vehicles seen by several fixed edges are
/// counted once per edge.
pub fn subapp2_merge(window: (u64, u64), records: &[TrafficRecord]) -> Result<NetworkSnapshot, AppError> {
    let (t0_ms, t1_ms) = window;
    if let Some(r) = records.iter().find(|r| (r.t0_ms, r.t1_ms) != window) {
        return Err(AppError::WindowMismatch { got0: r.t0_ms, got1: r.t1_ms, t0_ms, t1_ms });
    }
    let weighted: Vec<_> = records.iter().filter(|r| r.bsm_count > 0).filter_map(|r| Some((r.mean_speed_mps?, r.bsm_count))).collect();
    let n: u64 = weighted.iter().map(|(_, c)| c).sum();
    let mean = (n > 0).then(|| weighted.iter().map(|(m, c)| m * *c as f64).sum::<f64>() / n as f64);
    Ok(NetworkSnapshot {
        t0_ms,
        t1_ms,
        records: records.to_vec(),
        total_vehicle_count: records.iter().map(|r| r.vehicle_count).sum(),
        mean_speed_mps: mean,
    })
}
