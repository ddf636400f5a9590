//! Synthetic traces, so scenarios need no recorded mobility data.

use serde::{Deserialize, Serialize};

use crate::model::FT_TO_M;
use crate::trace::TracePoint;

/// Multi-lane ring road heading east. Vehicles are spread evenly along each
/// lane and keep a constant per-lane speed; positions wrap at the road end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSpec {
    #[serde(default = "default_lanes")]
    pub lanes: usize,
    #[serde(default = "default_lane_spacing")]
    pub lane_spacing_m: f64,
    /// Road length per fixed edge.
    #[serde(default = "default_segment")]
    pub segment_length_m: f64,
    #[serde(default = "default_speed_min")]
    pub speed_min_mps: f64,
    #[serde(default = "default_speed_max")]
    pub speed_max_mps: f64,
}

fn default_lanes() -> usize {
    4
}
fn default_lane_spacing() -> f64 {
    3.5
}
pub(crate) fn default_segment() -> f64 {
    600.0
}
fn default_speed_min() -> f64 {
    8.0
}
fn default_speed_max() -> f64 {
    14.0
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self {
            lanes: default_lanes(),
            lane_spacing_m: default_lane_spacing(),
            segment_length_m: default_segment(),
            speed_min_mps: default_speed_min(),
            speed_max_mps: default_speed_max(),
        }
    }
}

/// Lead and follower in one lane heading east, each with an optional
/// constant-deceleration braking phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub lead_speed_mps: f64,
    pub follow_speed_mps: f64,
    pub initial_gap_m: f64,
    #[serde(default)]
    pub lead_brake: Option<Brake>,
    #[serde(default)]
    pub follow_brake: Option<Brake>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Brake {
    pub at_s: f64,
    #[serde(default = "default_decel")]
    pub decel_mps2: f64,
    #[serde(default)]
    pub target_mps: f64,
}

fn default_decel() -> f64 {
    11.0 * FT_TO_M
}

/// Position and speed at `t` for a vehicle starting at `x0` with speed `v0`.
pub fn braking_motion(x0: f64, v0: f64, brake: Option<Brake>, t: f64) -> (f64, f64) {
    let Some(b) = brake.filter(|b| t > b.at_s && b.target_mps < v0) else { return (x0 + v0 * t, v0) };
    let x_b = x0 + v0 * b.at_s;
    let t_stop = (v0 - b.target_mps) / b.decel_mps2;
    let dt = t - b.at_s;
    if dt <= t_stop {
        (x_b + v0 * dt - 0.5 * b.decel_mps2 * dt * dt, v0 - b.decel_mps2 * dt)
    } else {
        let x_s = x_b + (v0 + b.target_mps) * 0.5 * t_stop;
        (x_s + b.target_mps * (dt - t_stop), b.target_mps)
    }
}

fn sample_times(duration_s: f64, rate_hz: f64) -> impl Iterator<Item = f64> {
    let n = (duration_s * rate_hz - 1e-9).ceil().max(0.0) as usize;
    (0..n).map(move |k| k as f64 / rate_hz)
}

pub fn vehicle_name(i: usize) -> String {
    format!("veh{:04}", i + 1)
}

pub fn road_trace(spec: &RoadSpec, n_mobile: usize, n_fixed: usize, duration_s: f64, rate_hz: f64) -> Vec<TracePoint> {
    let lanes = spec.lanes.max(1);
    let length = spec.segment_length_m * n_fixed.max(1) as f64;
    let per_lane = n_mobile.div_ceil(lanes).max(1);
    let spacing = length / per_lane as f64;
    let mut out = Vec::new();
    for i in 0..n_mobile {
        let lane = i % lanes;
        let slot = i / lanes;
        let frac = if lanes > 1 { lane as f64 / (lanes - 1) as f64 } else { 0.0 };
        let speed = spec.speed_min_mps + (spec.speed_max_mps - spec.speed_min_mps) * frac;
        let x0 = (slot as f64 + lane as f64 / lanes as f64) * spacing;
        let y = (lane as f64 - (lanes - 1) as f64 / 2.0) * spec.lane_spacing_m;
        let id = vehicle_name(i);
        for t in sample_times(duration_s, rate_hz) {
            out.push(TracePoint {
                t_s: t,
                vehicle_id: id.clone(),
                x_m: (x0 + speed * t).rem_euclid(length),
                y_m: y,
                speed_mps: speed,
                heading_deg: 90.0,
            });
        }
    }
    out
}

pub const LEAD_ID: &str = "lead-veh";
pub const FOLLOW_ID: &str = "follow-veh";

pub fn pair_trace(spec: &PairSpec, duration_s: f64, rate_hz: f64) -> Vec<TracePoint> {
    let mut out = Vec::new();
    for (id, x0, v0, brake) in [
        (LEAD_ID, spec.initial_gap_m, spec.lead_speed_mps, spec.lead_brake),
        (FOLLOW_ID, 0.0, spec.follow_speed_mps, spec.follow_brake),
    ] {
        for t in sample_times(duration_s, rate_hz) {
            let (x, v) = braking_motion(x0, v0, brake, t);
            out.push(TracePoint { t_s: t, vehicle_id: id.into(), x_m: x, y_m: 0.0, speed_mps: v.max(0.0), heading_deg: 90.0 });
        }
    }
    out
}
