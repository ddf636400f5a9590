//! Envelope signing (V2V) and signing plus authenticated encryption (V2I).

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SecurityError;
use crate::model::Envelope;

const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// Vehicle to vehicle: signed, plaintext.
    V2V,
    /// Vehicle/infrastructure to infrastructure: signed and encrypted.
    V2I,
}

#[derive(Clone, Default)]
pub struct KeyMaterial {
    pub signing_key: Option<SigningKey>,
    pub link_key: Option<[u8; 32]>,
}

impl KeyMaterial {
    pub fn new(signing_key: SigningKey, link_key: Option<[u8; 32]>) -> Self {
        Self { signing_key: Some(signing_key), link_key }
    }
}

fn header_bytes(env: &Envelope) -> Vec<u8> {
    let mut h = Vec::with_capacity(64);
    for field in [env.topic.as_str().as_bytes(), env.producer.as_bytes()] {
        h.extend_from_slice(&(field.len() as u32).to_le_bytes());
        h.extend_from_slice(field);
    }
    h.extend_from_slice(&env.seq.to_le_bytes());
    h.extend_from_slice(&env.t_generated_ms.to_le_bytes());
    h.push(env.encrypted as u8);
    h
}

fn signed_bytes(env: &Envelope) -> Vec<u8> {
    let mut b = header_bytes(env);
    b.extend_from_slice(&env.payload);
    b
}

fn nonce_for(env: &Envelope) -> [u8; NONCE_LEN] {
    let mut h = Sha256::new();
    h.update(header_bytes(env));
    let d = h.finalize();
    let mut n = [0u8; NONCE_LEN];
    n.copy_from_slice(&d[..NONCE_LEN]);
    n
}

/// Signs `env` (and for V2I encrypts its payload first).
pub fn protect_envelope(mut env: Envelope, link: LinkKind, keys: &KeyMaterial) -> Result<Envelope, SecurityError> {
    let sk = keys.signing_key.as_ref().ok_or(SecurityError::MissingKey("signing key"))?;
    match link {
        LinkKind::V2V => env.encrypted = false,
        LinkKind::V2I => {
            let lk = keys.link_key.ok_or(SecurityError::MissingKey("link key"))?;
            env.encrypted = true;
            let nonce = nonce_for(&env);
            let aad = header_bytes(&env);
            let cipher = ChaCha20Poly1305::new(Key::from_slice(&lk));
            let ct = cipher
                .encrypt(Nonce::from_slice(&nonce), Payload { msg: &env.payload, aad: &aad })
                .map_err(|_| SecurityError::Crypto)?;
            let mut payload = Vec::with_capacity(NONCE_LEN + ct.len());
            payload.extend_from_slice(&nonce);
            payload.extend_from_slice(&ct);
            env.payload = payload;
        }
    }
    env.signature = Some(sign(sk, &env).to_vec());
    Ok(env)
}

fn sign(sk: &SigningKey, env: &Envelope) -> [u8; 64] {
    sk.sign(&signed_bytes(env)).to_bytes()
}

pub fn verify_envelope(env: &Envelope, key: &VerifyingKey) -> bool {
    let Some(sig) = env.signature.as_deref() else { return false };
    let Ok(sig) = Signature::from_slice(sig) else { return false };
    key.verify(&signed_bytes(env), &sig).is_ok()
}

/// Verifies the signature and returns the plaintext payload.
pub fn unprotect(env: &Envelope, key: &VerifyingKey, link_key: Option<&[u8; 32]>) -> Result<Vec<u8>, SecurityError> {
    if !verify_envelope(env, key) {
        return Err(SecurityError::BadSignature);
    }
    open_payload(env, link_key)
}

/// Returns the plaintext payload without checking the signature. Decryption is
/// still authenticated, so a tampered ciphertext fails.
pub fn open_payload(env: &Envelope, link_key: Option<&[u8; 32]>) -> Result<Vec<u8>, SecurityError> {
    if !env.encrypted {
        return Ok(env.payload.clone());
    }
    let lk = link_key.ok_or(SecurityError::MissingKey("link key"))?;
    if env.payload.len() < NONCE_LEN {
        return Err(SecurityError::Crypto);
    }
    let (nonce, ct) = env.payload.split_at(NONCE_LEN);
    let aad = header_bytes(env);
    ChaCha20Poly1305::new(Key::from_slice(lk))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad: &aad })
        .map_err(|_| SecurityError::Crypto)
}
