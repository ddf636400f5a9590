//! Access control, credential management and flow-based application security.
//!
//! [`SecurityContext`] is the trusted API every edge and the broker go through:
//! it issues and checks credentials, enforces access manifests, evaluates flow
//! policies and keeps the quarantine log.

mod flow;
mod pki;
mod protect;
mod scrub;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use ed25519_dalek::VerifyingKey;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flow::{
    check_flow, pattern_matches, validate_pattern, EnvelopeRef, FlowDecision, FlowPolicy, QuarantineLog,
    QuarantineReason, QuarantineRecord,
};
pub use pki::{
    verify_certificate, Certificate, CertificateAuthority, Credential, Role, SessionToken, TokenRegistry,
    DEFAULT_CERT_VALIDITY_MS, TOKEN_VALIDITY_MS,
};
pub use protect::{open_payload, protect_envelope, unprotect, verify_envelope, KeyMaterial, LinkKind};
pub use scrub::{is_pseudonym, pseudonym, scrub, scrub_payload, ScrubSalt};

use crate::model::{Envelope, Topic};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SecurityError {
    #[error("identity {0} is revoked")]
    Revoked(String),
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("credential expired")]
    Expired,
    #[error("credential not yet valid")]
    NotYetValid,
    #[error("bad signature")]
    BadSignature,
    #[error("invalid session token")]
    InvalidToken,
    #[error("missing key material: {0}")]
    MissingKey(&'static str),
    #[error("cryptographic failure")]
    Crypto,
    #[error("invalid pattern {0:?}")]
    BadPattern(String),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("manifests are sealed for this run")]
    Sealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Service {
    HetNet,
    Warehouse,
    Metrics,
}

/// Declared access rights of one subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessManifest {
    pub subject: String,
    #[serde(default)]
    pub writable_topics: Vec<String>,
    #[serde(default)]
    pub readable_topics: Vec<String>,
    #[serde(default)]
    pub services: Vec<Service>,
}

impl AccessManifest {
    pub fn validate(&self) -> Result<(), SecurityError> {
        self.writable_topics.iter().chain(&self.readable_topics).try_for_each(|p| validate_pattern(p))
    }

    pub fn can_write(&self, topic: &Topic) -> bool {
        self.writable_topics.iter().any(|p| pattern_matches(p, topic.as_str()))
    }

    pub fn can_read(&self, topic: &Topic) -> bool {
        self.readable_topics.iter().any(|p| pattern_matches(p, topic.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct AllowKey {
    consumer: String,
    topic: String,
    producer: String,
    seq: u64,
}

pub struct SecurityContext {
    ca: CertificateAuthority,
    tokens: TokenRegistry,
    manifests: RwLock<HashMap<String, AccessManifest>>,
    sealed: RwLock<bool>,
    policies: RwLock<Arc<Vec<FlowPolicy>>>,
    directory: RwLock<HashMap<String, Certificate>>,
    quarantine: QuarantineLog,
    salt: ScrubSalt,
    allow_log: Mutex<Option<HashSet<AllowKey>>>,
}

impl SecurityContext {
    pub fn new(seed: u64) -> Self {
        Self::with_authority(CertificateAuthority::new(seed), seed)
    }

    pub fn with_authority(ca: CertificateAuthority, seed: u64) -> Self {
        Self {
            ca,
            tokens: TokenRegistry::new(seed),
            manifests: RwLock::new(HashMap::new()),
            sealed: RwLock::new(false),
            policies: RwLock::new(Arc::new(Vec::new())),
            directory: RwLock::new(HashMap::new()),
            quarantine: QuarantineLog::default(),
            salt: ScrubSalt::from_seed(seed),
            allow_log: Mutex::new(None),
        }
    }

    pub fn authority(&self) -> &CertificateAuthority {
        &self.ca
    }

    /// Registers `identity`, issues its certificate and publishes the
    /// certificate in the directory used for signature checks.
    pub fn register_and_issue(&self, identity: &str, role: Role, now_ms: u64) -> Result<Credential, SecurityError> {
        let cred = self.ca.register_and_issue(identity, role, now_ms)?;
        self.directory.write().insert(identity.to_owned(), cred.certificate.clone());
        Ok(cred)
    }

    pub fn authenticate(&self, cert: &Certificate, now_ms: u64) -> Result<SessionToken, SecurityError> {
        self.ca.verify_certificate(cert, now_ms)?;
        Ok(self.tokens.issue(cert, now_ms))
    }

    pub fn validate_token(&self, token: &str, now_ms: u64) -> Result<SessionToken, SecurityError> {
        let tok = self.tokens.validate(token, now_ms)?;
        if self.ca.is_revoked(&tok.subject) {
            return Err(SecurityError::Revoked(tok.subject));
        }
        Ok(tok)
    }

    pub fn revoke_token(&self, token: &str) -> bool {
        self.tokens.revoke_token(token)
    }

    /// Revokes an identity: no new certificates, its tokens die, and its
    /// signatures stop verifying.
    pub fn revoke(&self, identity: &str) {
        self.ca.revoke(identity);
        self.tokens.revoke_subject(identity);
        self.directory.write().remove(identity);
    }

    pub fn certificate_of(&self, subject: &str) -> Option<Certificate> {
        self.directory.read().get(subject).cloned()
    }

    pub fn declare_manifest(&self, manifest: AccessManifest) -> Result<(), SecurityError> {
        if *self.sealed.read() {
            return Err(SecurityError::Sealed);
        }
        manifest.validate()?;
        self.manifests.write().insert(manifest.subject.clone(), manifest);
        Ok(())
    }

    /// Freezes the manifest set for the rest of the run.
    pub fn seal_manifests(&self) {
        *self.sealed.write() = true;
    }

    pub fn manifest(&self, subject: &str) -> Option<AccessManifest> {
        self.manifests.read().get(subject).cloned()
    }

    pub fn can_write(&self, subject: &str, topic: &Topic) -> bool {
        self.manifests.read().get(subject).is_some_and(|m| m.can_write(topic))
    }

    pub fn can_read(&self, subject: &str, topic: &Topic) -> bool {
        self.manifests.read().get(subject).is_some_and(|m| m.can_read(topic))
    }

    pub fn has_service(&self, subject: &str, service: Service) -> bool {
        self.manifests.read().get(subject).is_some_and(|m| m.services.contains(&service))
    }

    pub fn set_policies(&self, policies: Vec<FlowPolicy>) -> Result<(), SecurityError> {
        policies.iter().try_for_each(FlowPolicy::validate)?;
        *self.policies.write() = Arc::new(policies);
        Ok(())
    }

    pub fn policies(&self) -> Arc<Vec<FlowPolicy>> {
        self.policies.read().clone()
    }

    pub fn salt(&self) -> &ScrubSalt {
        &self.salt
    }

    pub fn quarantine(&self) -> &QuarantineLog {
        &self.quarantine
    }

    /// Turns on the record of every Allow decision, for delivery audits.
    pub fn record_allows(&self) {
        self.allow_log.lock().get_or_insert_with(HashSet::new);
    }

    pub fn was_allowed(&self, consumer: &str, env: &Envelope) -> bool {
        self.allow_log.lock().as_ref().is_some_and(|log| log.contains(&allow_key(consumer, env)))
    }

    /// Flow gate in front of delivery. Denials are quarantined here.
    pub fn admit(&self, env: &Arc<Envelope>, consumer: &str, now_ms: u64) -> FlowDecision {
        let decision = check_flow(&env.label, consumer, &self.policies.read());
        match decision {
            FlowDecision::Allow => {
                if let Some(log) = self.allow_log.lock().as_mut() {
                    log.insert(allow_key(consumer, env));
                }
            }
            FlowDecision::Quarantine(reason) => {
                self.quarantine.push(env.clone(), consumer, reason, now_ms);
            }
        }
        decision
    }

    /// Key for checking signatures by `producer` at `now_ms`.
    pub fn verifying_key(&self, producer: &str, now_ms: u64) -> Result<VerifyingKey, SecurityError> {
        let dir = self.directory.read();
        let cert = dir.get(producer).ok_or_else(|| SecurityError::UnknownSubject(producer.to_owned()))?;
        if !cert.is_valid_at(now_ms) {
            return Err(SecurityError::Expired);
        }
        cert.verifying_key()
    }

    /// Verifies an inbound envelope's signature; on failure the envelope is
    /// quarantined against `receiver` and the reason returned.
    pub fn verify_ingress(&self, env: &Arc<Envelope>, receiver: &str, now_ms: u64) -> Result<(), QuarantineReason> {
        let reason = match self.verifying_key(&env.producer, now_ms) {
            Ok(key) if verify_envelope(env, &key) => return Ok(()),
            Ok(_) | Err(SecurityError::UnknownSubject(_)) | Err(SecurityError::BadSignature) => {
                QuarantineReason::BadSignature
            }
            Err(_) => QuarantineReason::Expired,
        };
        self.quarantine.push(env.clone(), receiver, reason, now_ms);
        Err(reason)
    }
}

fn allow_key(consumer: &str, env: &Envelope) -> AllowKey {
    AllowKey {
        consumer: consumer.to_owned(),
        topic: env.topic.as_str().to_owned(),
        producer: env.producer.clone(),
        seq: env.seq,
    }
}
