//! Registration/certificate authority, certificates and session tokens.

use std::collections::{HashMap, HashSet};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::SecurityError;

pub const DEFAULT_CERT_VALIDITY_MS: u64 = 24 * 3600 * 1000;
pub const TOKEN_VALIDITY_MS: u64 = 3600 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    MobileEdge,
    FixedEdge,
    SystemEdge,
    Application,
    Developer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub subject: String,
    pub role: Role,
    #[serde(with = "hex_key")]
    pub public_key: [u8; 32],
    pub not_before_ms: u64,
    pub not_after_ms: u64,
    #[serde(with = "hex_sig")]
    pub issuer_signature: [u8; 64],
}

impl Certificate {
    fn tbs_bytes(&self) -> Vec<u8> {
        let tbs = (&self.subject, self.role, hex::encode(self.public_key), self.not_before_ms, self.not_after_ms);
        serde_json::to_vec(&tbs).expect("tbs encodes")
    }

    pub fn verifying_key(&self) -> Result<VerifyingKey, SecurityError> {
        VerifyingKey::from_bytes(&self.public_key).map_err(|_| SecurityError::BadSignature)
    }

    pub fn is_valid_at(&self, now_ms: u64) -> bool {
        self.not_before_ms <= now_ms && now_ms < self.not_after_ms
    }
}

/// A certificate plus the subject's private signing key.
#[derive(Clone)]
pub struct Credential {
    pub certificate: Certificate,
    pub signing_key: SigningKey,
}

impl std::fmt::Debug for Credential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credential").field("certificate", &self.certificate).finish_non_exhaustive()
    }
}

/// Combined registration and certificate authority.
///
/// The registration side rejects malformed or revoked identities before the
/// certificate side signs anything. Issuance is serialized through one lock.
pub struct CertificateAuthority {
    key: SigningKey,
    revoked: RwLock<HashSet<String>>,
    rng: Mutex<ChaCha20Rng>,
    cert_validity_ms: u64,
}

impl CertificateAuthority {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_ca00);
        let mut sk = [0u8; 32];
        rng.fill_bytes(&mut sk);
        Self {
            key: SigningKey::from_bytes(&sk),
            revoked: RwLock::new(HashSet::new()),
            rng: Mutex::new(rng),
            cert_validity_ms: DEFAULT_CERT_VALIDITY_MS,
        }
    }

    pub fn with_validity(mut self, validity_ms: u64) -> Self {
        self.cert_validity_ms = validity_ms.max(1);
        self
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn register_and_issue(&self, identity: &str, role: Role, now_ms: u64) -> Result<Credential, SecurityError> {
        if identity.is_empty() || identity.len() > 128 || identity.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(SecurityError::MalformedRequest(format!("bad identity {identity:?}")));
        }
        if self.is_revoked(identity) {
            return Err(SecurityError::Revoked(identity.to_owned()));
        }
        let mut sk = [0u8; 32];
        self.rng.lock().fill_bytes(&mut sk);
        let signing_key = SigningKey::from_bytes(&sk);
        let mut certificate = Certificate {
            subject: identity.to_owned(),
            role,
            public_key: signing_key.verifying_key().to_bytes(),
            not_before_ms: now_ms,
            not_after_ms: now_ms + self.cert_validity_ms,
            issuer_signature: [0; 64],
        };
        certificate.issuer_signature = self.key.sign(&certificate.tbs_bytes()).to_bytes();
        Ok(Credential { certificate, signing_key })
    }

    pub fn revoke(&self, identity: &str) {
        self.revoked.write().insert(identity.to_owned());
    }

    pub fn is_revoked(&self, identity: &str) -> bool {
        self.revoked.read().contains(identity)
    }

    pub fn verify_certificate(&self, cert: &Certificate, now_ms: u64) -> Result<(), SecurityError> {
        verify_certificate(cert, &self.public_key(), now_ms)?;
        if self.is_revoked(&cert.subject) {
            return Err(SecurityError::Revoked(cert.subject.clone()));
        }
        Ok(())
    }
}

/// Checks the issuer signature and the validity window `[not_before, not_after)`.
pub fn verify_certificate(cert: &Certificate, ca_key: &VerifyingKey, now_ms: u64) -> Result<(), SecurityError> {
    if cert.not_before_ms >= cert.not_after_ms {
        return Err(SecurityError::MalformedRequest("empty validity window".into()));
    }
    let sig = Signature::from_bytes(&cert.issuer_signature);
    ca_key.verify(&cert.tbs_bytes(), &sig).map_err(|_| SecurityError::BadSignature)?;
    if now_ms >= cert.not_after_ms {
        return Err(SecurityError::Expired);
    }
    if now_ms < cert.not_before_ms {
        return Err(SecurityError::NotYetValid);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub subject: String,
    pub role: Role,
    pub expires_ms: u64,
}

/// Issued session tokens, keyed by their opaque value.
pub struct TokenRegistry {
    tokens: RwLock<HashMap<String, SessionToken>>,
    rng: Mutex<ChaCha20Rng>,
}

impl TokenRegistry {
    pub fn new(seed: u64) -> Self {
        Self { tokens: RwLock::new(HashMap::new()), rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed ^ 0x70_6b3e)) }
    }

    pub fn issue(&self, cert: &Certificate, now_ms: u64) -> SessionToken {
        let mut raw = [0u8; 16];
        self.rng.lock().fill_bytes(&mut raw);
        let tok = SessionToken {
            token: hex::encode(raw),
            subject: cert.subject.clone(),
            role: cert.role,
            expires_ms: (now_ms + TOKEN_VALIDITY_MS).min(cert.not_after_ms),
        };
        self.tokens.write().insert(tok.token.clone(), tok.clone());
        tok
    }

    pub fn validate(&self, token: &str, now_ms: u64) -> Result<SessionToken, SecurityError> {
        let tokens = self.tokens.read();
        let tok = tokens.get(token).ok_or(SecurityError::InvalidToken)?;
        if now_ms >= tok.expires_ms {
            return Err(SecurityError::Expired);
        }
        Ok(tok.clone())
    }

    pub fn revoke_token(&self, token: &str) -> bool {
        self.tokens.write().remove(token).is_some()
    }

    pub fn revoke_subject(&self, subject: &str) {
        self.tokens.write().retain(|_, t| t.subject != subject);
    }
}

mod hex_key {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(String::deserialize(d)?, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

mod hex_sig {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let mut out = [0u8; 64];
        hex::decode_to_slice(String::deserialize(d)?, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}
