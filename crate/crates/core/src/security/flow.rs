//! ⟨source, sink⟩ flow policies and the quarantine log.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::model::{is_valid_pattern, Envelope, Label, Topic};

/// Literal or trailing-`*` prefix match.
pub fn pattern_matches(pattern: &str, value: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => value.starts_with(prefix),
        None => pattern == value,
    }
}

/// A pattern may hold at most one `*`, and only as its last character.
pub fn validate_pattern(pattern: &str) -> Result<(), SecurityError> {
    let star_ok = match pattern.find('*') {
        None => true,
        Some(i) => i == pattern.len() - 1,
    };
    if is_valid_pattern(pattern) && star_ok {
        Ok(())
    } else {
        Err(SecurityError::BadPattern(pattern.to_owned()))
    }
}

/// Allow rule; anything not allowed is denied.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowPolicy {
    #[serde(rename = "source")]
    pub source_pattern: String,
    #[serde(rename = "sink")]
    pub sink_pattern: String,
}

impl FlowPolicy {
    pub fn allow(source: impl Into<String>, sink: impl Into<String>) -> Result<Self, SecurityError> {
        let p = Self { source_pattern: source.into(), sink_pattern: sink.into() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SecurityError> {
        validate_pattern(&self.source_pattern)?;
        validate_pattern(&self.sink_pattern)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuarantineReason {
    NoPolicy,
    SinkMismatch,
    BadSignature,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowDecision {
    Allow,
    Quarantine(QuarantineReason),
}

/// Pure flow decision.
///
/// `NoPolicy` when no policy admits `(label.source, consumer)`; `SinkMismatch`
/// when a policy admits it but the producer's declared sink excludes the consumer.
pub fn check_flow(label: &Label, consumer_id: &str, policies: &[FlowPolicy]) -> FlowDecision {
    let admitted = policies
        .iter()
        .any(|p| pattern_matches(&p.source_pattern, &label.source) && pattern_matches(&p.sink_pattern, consumer_id));
    if !admitted {
        FlowDecision::Quarantine(QuarantineReason::NoPolicy)
    } else if !pattern_matches(&label.sink, consumer_id) {
        FlowDecision::Quarantine(QuarantineReason::SinkMismatch)
    } else {
        FlowDecision::Allow
    }
}

/// Identifies a quarantined envelope without exposing its payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeRef {
    pub topic: Topic,
    pub producer: String,
    pub seq: u64,
    pub t_generated_ms: u64,
}

impl From<&Envelope> for EnvelopeRef {
    fn from(e: &Envelope) -> Self {
        Self { topic: e.topic.clone(), producer: e.producer.clone(), seq: e.seq, t_generated_ms: e.t_generated_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarantineRecord {
    pub envelope: EnvelopeRef,
    pub consumer: String,
    pub reason: QuarantineReason,
    pub t_ms: u64,
}

struct Quarantined {
    record: QuarantineRecord,
    // retained for inspection and accounting, never delivered
    #[allow(dead_code)]
    envelope: Arc<Envelope>,
}

/// Append-only quarantine store.
#[derive(Default)]
pub struct QuarantineLog {
    entries: Mutex<Vec<Quarantined>>,
}

impl QuarantineLog {
    pub fn push(&self, envelope: Arc<Envelope>, consumer: &str, reason: QuarantineReason, t_ms: u64) -> QuarantineRecord {
        let record = QuarantineRecord { envelope: EnvelopeRef::from(&*envelope), consumer: consumer.to_owned(), reason, t_ms };
        self.entries.lock().push(Quarantined { record: record.clone(), envelope });
        record
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<QuarantineRecord> {
        self.records_since(0)
    }

    pub fn records_since(&self, from: usize) -> Vec<QuarantineRecord> {
        self.entries.lock().iter().skip(from).map(|q| q.record.clone()).collect()
    }

    pub fn count_for(&self, consumer: &str) -> usize {
        self.entries.lock().iter().filter(|q| q.record.consumer == consumer).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(source: &str) -> Label {
        Label { source: source.into(), sink: "*".into() }
    }

    #[test]
    fn direct_match_allows() {
        let p = vec![FlowPolicy::allow("bsm.raw.*", "app.fcw").unwrap()];
        assert_eq!(check_flow(&label("bsm.raw.f1"), "app.fcw", &p), FlowDecision::Allow);
    }

    #[test]
    fn default_deny() {
        let p = vec![FlowPolicy::allow("bsm.raw.*", "app.fcw").unwrap()];
        assert_eq!(
            check_flow(&label("bsm.raw.f1"), "app.rogue", &p),
            FlowDecision::Quarantine(QuarantineReason::NoPolicy)
        );
        assert_eq!(check_flow(&label("bsm.raw.f1"), "app.fcw", &[]), FlowDecision::Quarantine(QuarantineReason::NoPolicy));
    }

    #[test]
    fn declared_sink_narrows() {
        let p = vec![FlowPolicy::allow("*", "app.*").unwrap()];
        let l = Label { source: "x".into(), sink: "app.fcw".into() };
        assert_eq!(check_flow(&l, "app.fcw", &p), FlowDecision::Allow);
        assert_eq!(check_flow(&l, "app.other", &p), FlowDecision::Quarantine(QuarantineReason::SinkMismatch));
    }

    #[test]
    fn patterns() {
        assert!(pattern_matches("*", ""));
        assert!(pattern_matches("a.*", "a."));
        assert!(!pattern_matches("a.*", "a"));
        assert!(pattern_matches("abc", "abc"));
        assert!(!pattern_matches("abc", "abcd"));
        assert!(validate_pattern("a.*").is_ok());
        assert!(validate_pattern("a*b").is_err());
        assert!(validate_pattern("**").is_err());
        assert!(validate_pattern("A").is_err());
        assert!(FlowPolicy::allow("x*y", "a").is_err());
    }

    #[test]
    fn policy_file_shape() {
        let p: Vec<FlowPolicy> = serde_json::from_str(r#"[{"source":"bsm.raw.*","sink":"app.fcw"}]"#).unwrap();
        assert_eq!(p[0].source_pattern, "bsm.raw.*");
        assert_eq!(p[0].sink_pattern, "app.fcw");
    }

    #[test]
    fn quarantine_log_accounting() {
        let log = QuarantineLog::default();
        let env = Arc::new(Envelope::new(Topic::new("t").unwrap(), "p", 1, 0, vec![]));
        log.push(env.clone(), "c1", QuarantineReason::NoPolicy, 5);
        log.push(env, "c2", QuarantineReason::BadSignature, 6);
        assert_eq!(log.len(), 2);
        assert_eq!(log.count_for("c1"), 1);
        assert_eq!(log.records_since(1)[0].reason, QuarantineReason::BadSignature);
    }
}
