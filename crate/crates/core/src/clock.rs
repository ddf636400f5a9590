//! Scenario clocks. All platform timestamps are integer milliseconds.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;

    fn mode(&self) -> ClockMode;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Virtual,
    Wall,
}

/// Deterministic clock advanced explicitly by the scenario engine.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        Self { now: Arc::new(AtomicU64::new(start_ms)) }
    }

    /// Moves the clock to `t_ms`. The clock never goes backwards.
    pub fn set(&self, t_ms: u64) {
        self.now.fetch_max(t_ms, Ordering::AcqRel);
    }

    pub fn advance(&self, dt_ms: u64) {
        self.now.fetch_add(dt_ms, Ordering::AcqRel);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::Acquire)
    }

    fn mode(&self) -> ClockMode {
        ClockMode::Virtual
    }
}

/// Milliseconds elapsed since construction.
#[derive(Debug, Clone)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn mode(&self) -> ClockMode {
        ClockMode::Wall
    }
}
