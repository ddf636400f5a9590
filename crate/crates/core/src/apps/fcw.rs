//! Forward collision warning.
//!
//! Warning distance `D_w = (V_o - V_t)^2 / (2 a_moderate) + d`, where `V_o` is
//! the preceding vehicle's speed, `V_t` the follower's and `d` the average
//! vehicle length. The follower warns while the gap is strictly below `D_w`.

use serde::{Deserialize, Serialize};

use super::AppError;
use crate::model::{angle_diff_deg, bearing_deg, distance, Bsm, FT_TO_M};

/// Bearing cone, either side of the own heading, in which a neighbor counts as ahead.
pub const PRECEDING_CONE_DEG: f64 = 15.0;
/// Largest heading difference for a neighbor to count as same-direction.
pub const HEADING_TOLERANCE_DEG: f64 = 30.0;
/// Neighbors not heard from for longer than this are ignored.
pub const NEIGHBOR_STALE_MS: u64 = 500;
/// Modeled on-board compute time of one evaluation.
pub const FCW_COMPUTE_MS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcwParams {
    #[serde(default = "default_a_moderate")]
    pub a_moderate_mps2: f64,
    #[serde(default = "default_d")]
    pub d_m: f64,
}

fn default_a_moderate() -> f64 {
    11.0 * FT_TO_M
}

fn default_d() -> f64 {
    5.0
}

impl Default for FcwParams {
    fn default() -> Self {
        Self { a_moderate_mps2: default_a_moderate(), d_m: default_d() }
    }
}

impl FcwParams {
    pub fn validate(&self) -> Result<(), AppError> {
        if !(self.a_moderate_mps2 > 0.0) || !self.a_moderate_mps2.is_finite() {
            return Err(AppError::BadParams("a_moderate_mps2 must be positive"));
        }
        if !(self.d_m >= 0.0) || !self.d_m.is_finite() {
            return Err(AppError::BadParams("d_m must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcwInput {
    pub v_o_mps: f64,
    pub v_t_mps: f64,
    pub gap_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcwOutput {
    pub warn: bool,
    pub d_w_m: f64,
    pub t_decision_ms: u64,
}

/// Payload published on `fcw.warnings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcwWarning {
    pub follower_pseudonym: String,
    pub preceding_pseudonym: String,
    pub gap_m: f64,
    pub d_w_m: f64,
    pub t_decision_ms: u64,
}

pub fn fcw_threshold(v_o_mps: f64, v_t_mps: f64, params: &FcwParams) -> f64 {
    let dv = v_o_mps - v_t_mps;
    dv * dv / (2.0 * params.a_moderate_mps2) + params.d_m
}

pub fn fcw_evaluate(input: &FcwInput, params: &FcwParams, t_decision_ms: u64) -> Result<FcwOutput, AppError> {
    if !(input.v_o_mps >= 0.0) || !(input.v_t_mps >= 0.0) {
        return Err(AppError::BadInput("speeds must be non-negative"));
    }
    if !(input.gap_m >= 0.0) {
        return Err(AppError::BadInput("gap must be non-negative"));
    }
    let d_w_m = fcw_threshold(input.v_o_mps, input.v_t_mps, params);
    Ok(FcwOutput { warn: input.gap_m < d_w_m, d_w_m, t_decision_ms })
}

/// Nearest same-direction neighbor inside the forward cone, with its distance.
/// Earlier entries win distance ties.
pub fn find_preceding<'a>(me: &Bsm, neighbors: &'a [Bsm]) -> Option<(&'a Bsm, f64)> {
    let mut best: Option<(&Bsm, f64)> = None;
    for n in neighbors {
        if n.vehicle_id == me.vehicle_id {
            continue;
        }
        let gap = distance(me.pos, n.pos);
        if gap == 0.0
            || angle_diff_deg(bearing_deg(me.pos, n.pos), me.heading_deg) > PRECEDING_CONE_DEG
            || angle_diff_deg(n.heading_deg, me.heading_deg) > HEADING_TOLERANCE_DEG
        {
            continue;
        }
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((n, gap));
        }
    }
    best
}
