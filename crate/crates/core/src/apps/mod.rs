//! Reference connected-vehicle applications: forward collision warning on the
//! mobile edge and the two-stage traffic data collection on the fixed and
//! system edges.

mod fcw;
mod traffic;

pub use fcw::{
    fcw_evaluate, fcw_threshold, find_preceding, FcwInput, FcwOutput, FcwParams, FcwWarning, FCW_COMPUTE_MS,
    HEADING_TOLERANCE_DEG, NEIGHBOR_STALE_MS, PRECEDING_CONE_DEG,
};
pub use traffic::{subapp1_collect, subapp2_merge, window_of, NetworkSnapshot, TrafficRecord, WINDOW_MS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("invalid parameters: {0}")]
    BadParams(&'static str),
    #[error("invalid input: {0}")]
    BadInput(&'static str),
    #[error("sample at {t_ms} ms outside window [{t0_ms}, {t1_ms})")]
    OutsideWindow { t_ms: u64, t0_ms: u64, t1_ms: u64 },
    #[error("record window [{got0}, {got1}) does not match [{t0_ms}, {t1_ms})")]
    WindowMismatch { got0: u64, got1: u64, t0_ms: u64, t1_ms: u64 },
}
