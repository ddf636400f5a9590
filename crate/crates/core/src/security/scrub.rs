//! Sensitive-field scrubbing: vehicle ids become run-scoped keyed pseudonyms.

use hmac::{Hmac, Mac};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;

use crate::apps::{FcwWarning, TrafficRecord};
use crate::model::{Bsm, Envelope};

const PSEUDONYM_HEX: usize = 16;

/// Run-scoped secret for pseudonyms. A fresh salt makes pseudonyms unlinkable
/// across runs.
#[derive(Clone)]
pub struct ScrubSalt([u8; 32]);

impl ScrubSalt {
    pub fn from_seed(seed: u64) -> Self {
        let mut b = [0u8; 32];
        ChaCha20Rng::seed_from_u64(seed ^ 0x5c_2b5a17).fill_bytes(&mut b);
        Self(b)
    }

    pub fn from_bytes(b: [u8; 32]) -> Self {
        Self(b)
    }
}

/// `p-` followed by 16 lowercase hex digits.
pub fn is_pseudonym(s: &str) -> bool {
    s.len() == 2 + PSEUDONYM_HEX
        && s.starts_with("p-")
        && s[2..].bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub fn pseudonym(vehicle_id: &str, salt: &ScrubSalt) -> String {
    if is_pseudonym(vehicle_id) {
        return vehicle_id.to_owned();
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(&salt.0).expect("hmac takes any key length");
    mac.update(vehicle_id.as_bytes());
    let tag = mac.finalize().into_bytes();
    format!("p-{}", hex::encode(&tag[..PSEUDONYM_HEX / 2]))
}

/// Replaces vehicle identifiers in a known plaintext payload. Payloads with
/// nothing to scrub come back byte-identical; undecodable ones pass through.
pub fn scrub(mut env: Envelope, salt: &ScrubSalt) -> Envelope {
    if env.encrypted {
        log::warn!("scrub: encrypted payload on {} passed through", env.topic);
        return env;
    }
    if let Some(bytes) = scrub_payload(&env.payload, salt) {
        env.payload = bytes;
    }
    env
}

/// Returns the rewritten payload, or `None` when it should stay as is.
pub fn scrub_payload(payload: &[u8], salt: &ScrubSalt) -> Option<Vec<u8>> {
    if let Ok(mut bsm) = serde_json::from_slice::<Bsm>(payload) {
        if is_pseudonym(&bsm.vehicle_id) {
            return None;
        }
        bsm.vehicle_id = pseudonym(&bsm.vehicle_id, salt);
        return Some(serde_json::to_vec(&bsm).expect("bsm encodes"));
    }
    if let Ok(mut w) = serde_json::from_slice::<FcwWarning>(payload) {
        if is_pseudonym(&w.follower_pseudonym) && is_pseudonym(&w.preceding_pseudonym) {
            return None;
        }
        w.follower_pseudonym = pseudonym(&w.follower_pseudonym, salt);
        w.preceding_pseudonym = pseudonym(&w.preceding_pseudonym, salt);
        return Some(serde_json::to_vec(&w).expect("warning encodes"));
    }
    if serde_json::from_slice::<TrafficRecord>(payload).is_ok() {
        return None;
    }
    log::warn!("scrub: undecodable payload ({} bytes) passed through", payload.len());
    None
}
