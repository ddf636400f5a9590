//! Emulated radio and backhaul channel.
//!
//! One-way latency is `base + U[0, jitter_max]` whole milliseconds and each
//! transmission is lost independently with the medium's loss probability.
//! Draws come from a single seeded stream, so outcomes depend only on the seed
//! and the call order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetnet::{HetNetMonitor, MediumKind};
use crate::model::{distance, Position};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("range must be non-negative, got {0}")]
    NegativeRange(f64),
    #[error("medium {0:?} is not configured")]
    Unconfigured(MediumKind),
    #[error("invalid link parameters for {0:?}: {1}")]
    BadLink(MediumKind, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub base_latency_ms: u64,
    pub jitter_max_ms: u64,
    pub loss_prob: f64,
}

impl LinkParams {
    pub const fn new(base_latency_ms: u64, jitter_max_ms: u64, loss_prob: f64) -> Self {
        Self { base_latency_ms, jitter_max_ms, loss_prob }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub media: BTreeMap<MediumKind, LinkParams>,
    /// Overrides the scenario seed for channel draws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl Default for NetworkModel {
    fn default() -> Self {
        let media = [
            (MediumKind::Dsrc, LinkParams::new(2, 30, 0.01)),
            (MediumKind::WiFi, LinkParams::new(10, 40, 0.02)),
            (MediumKind::Lte, LinkParams::new(40, 80, 0.02)),
            (MediumKind::Fiber, LinkParams::new(1, 2, 0.0)),
        ];
        Self { media: media.into_iter().collect(), rng_seed: None }
    }
}

impl NetworkModel {
    pub fn lossless() -> Self {
        let mut m = Self::default();
        m.media.values_mut().for_each(|l| l.loss_prob = 0.0);
        m
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        for (k, l) in &self.media {
            if !(0.0..=1.0).contains(&l.loss_prob) {
                return Err(NetworkError::BadLink(*k, "loss_prob must be in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn link(&self, medium: MediumKind) -> Result<&LinkParams, NetworkError> {
        self.media.get(&medium).ok_or(NetworkError::Unconfigured(medium))
    }

    pub fn configured(&self) -> Vec<MediumKind> {
        self.media.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxOutcome {
    Delivered { arrival_t_ms: u64 },
    Lost,
}

/// Inclusive range test.
pub fn in_range(a: Position, b: Position, range_m: f64) -> Result<bool, NetworkError> {
    if !(range_m >= 0.0) {
        return Err(NetworkError::NegativeRange(range_m));
    }
    Ok(distance(a, b) <= range_m)
}

// Nominal received signal strength reported with each sample.
fn nominal_dbm(medium: MediumKind) -> f64 {
    match medium {
        MediumKind::Dsrc => -65.0,
        MediumKind::WiFi => -60.0,
        MediumKind::Lte => -90.0,
        MediumKind::Fiber => 0.0,
    }
}

pub struct Channel {
    model: NetworkModel,
    rng: ChaCha8Rng,
    hetnet: Option<Arc<HetNetMonitor>>,
    lost: u64,
    sent: u64,
}

impl Channel {
    pub fn new(model: NetworkModel, seed: u64, hetnet: Option<Arc<HetNetMonitor>>) -> Self {
        let seed = model.rng_seed.unwrap_or(seed);
        Self { model, rng: ChaCha8Rng::seed_from_u64(seed), hetnet, lost: 0, sent: 0 }
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn transmit(&mut self, medium: MediumKind, send_t_ms: u64) -> Result<TxOutcome, NetworkError> {
        let link = *self.model.link(medium)?;
        self.sent += 1;
        let lost = link.loss_prob > 0.0 && self.rng.random_bool(link.loss_prob);
        let outcome = if lost {
            self.lost += 1;
            TxOutcome::Lost
        } else {
            let jitter = if link.jitter_max_ms > 0 { self.rng.random_range(0..=link.jitter_max_ms) } else { 0 };
            TxOutcome::Delivered { arrival_t_ms: send_t_ms + link.base_latency_ms + jitter }
        };
        if let Some(h) = &self.hetnet {
            let (lat, ok) = match outcome {
                TxOutcome::Delivered { arrival_t_ms } => ((arrival_t_ms - send_t_ms) as f64, true),
                TxOutcome::Lost => (0.0, false),
            };
            h.record(medium, lat, ok, nominal_dbm(medium), send_t_ms).expect("latency is non-negative");
        }
        Ok(outcome)
    }

    pub fn lost(&self) -> u64 {
        self.lost
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }
}
