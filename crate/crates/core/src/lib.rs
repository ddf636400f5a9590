//! Edge-centric connected-vehicle data platform.
//!
//! Vehicles (mobile edges) broadcast basic safety messages; roadside units
//! (fixed edges) collect them, run local applications and forward results
//! through a secured publish/subscribe broker to a system edge that merges
//! them and stores everything in a warehouse.

// Range checks are written `!(x >= 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod broker;
pub mod clock;
pub mod edges;
pub mod harness;
pub mod hetnet;
pub mod model;
pub mod security;
pub mod trace;
pub mod warehouse;

pub use broker::{BatchConfig, Broker};
pub use clock::{Clock, ClockMode, VirtualClock};
pub use harness::{run_scenario, MetricsReport, Scenario};
pub use hetnet::{select_medium, AppRequirement, HetNetMonitor, MediumKind};
pub use model::{Bsm, Envelope, Position, Topic};
