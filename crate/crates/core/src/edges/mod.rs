//! Mobile, fixed and system edge runtimes over a simulated radio network.

pub mod network;
mod runtime;

pub use network::{in_range, Channel, LinkParams, NetworkError, NetworkModel, TxOutcome};
pub use runtime::{
    default_manifests, default_policies, subapp1_id, subapp2_id, Counters, FirstWarning, FixedSite, Notice, Platform,
    Reception, Sim, SimConfig, SimError, FCW_MONITOR_ID, FIXED_SERVICE_US, SUBAPP1_POLL_MS, SYSTEM_POLL_MS,
    V2V_TOPIC, WINDOW_GRACE_MS,
};
