//! In-process, topic-partitioned, append-only publish/subscribe log.
//!
//! One partition per topic and a single broker instance. Consumers read by
//! offset in batches; every envelope passes the flow gate of the
//! [`SecurityContext`] before it is handed out, and denied envelopes are
//! skipped (quarantined) rather than delivered.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, ClockMode};
use crate::model::{Envelope, Topic};
use crate::security::{pattern_matches, validate_pattern, FlowDecision, SecurityContext, SecurityError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrokerError {
    #[error("invalid topic name {0:?}")]
    InvalidTopic(String),
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("authentication failed: {0}")]
    Auth(#[from] SecurityError),
    #[error("{subject} may not access {topic}")]
    Permission { subject: String, topic: String },
    #[error("producer {producer} seq {seq} on {topic} does not exceed {last}")]
    Sequencing { producer: String, topic: String, seq: u64, last: u64 },
    #[error("unknown consumer {0}")]
    UnknownConsumer(String),
    #[error("consumer {0} already subscribed")]
    AlreadySubscribed(String),
    #[error("invalid batch config: max_batch must be >= 1")]
    BadBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub max_batch: usize,
    pub linger_ms: u64,
}

impl BatchConfig {
    pub fn new(max_batch: usize, linger_ms: u64) -> Result<Self, BrokerError> {
        if max_batch == 0 {
            return Err(BrokerError::BadBatch);
        }
        Ok(Self { max_batch, linger_ms })
    }
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { max_batch: 500, linger_ms: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicHandle {
    pub topic: Topic,
}

#[derive(Debug, Default)]
pub struct TopicLog {
    entries: VecDeque<Arc<Envelope>>,
    base_offset: u64,
    published_bytes: u64,
}

impl TopicLog {
    /// Offset the next append will receive.
    pub fn end_offset(&self) -> u64 {
        self.base_offset + self.entries.len() as u64
    }

    /// Entries evicted by retention.
    pub fn dropped(&self) -> u64 {
        self.base_offset
    }
}

/// Snapshot of one consumer's subscription.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub consumer_id: String,
    pub topic_patterns: Vec<String>,
    pub offsets: BTreeMap<Topic, u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerStats {
    pub delivered: u64,
    pub delivered_bytes: u64,
    pub quarantined: u64,
    /// Entries evicted by retention before this consumer read them.
    pub missed: u64,
    pub non_empty_polls: u64,
}

#[derive(Debug)]
struct SubState {
    patterns: Vec<String>,
    offsets: BTreeMap<Topic, u64>,
    cursor: usize,
    stats: ConsumerStats,
}

#[derive(Default)]
struct State {
    topics: BTreeMap<Topic, TopicLog>,
    last_seq: HashMap<(String, Topic), u64>,
    subs: HashMap<String, SubState>,
}

pub struct Broker {
    clock: Arc<dyn Clock>,
    security: Arc<SecurityContext>,
    retention: usize,
    state: Mutex<State>,
    appended: Condvar,
}

impl Broker {
    pub fn new(clock: Arc<dyn Clock>, security: Arc<SecurityContext>) -> Self {
        Self { clock, security, retention: 0, state: Mutex::new(State::default()), appended: Condvar::new() }
    }

    /// Keeps at most `max_entries` per topic (0 keeps everything).
    pub fn with_retention(mut self, max_entries: usize) -> Self {
        self.retention = max_entries;
        self
    }

    pub fn security(&self) -> &Arc<SecurityContext> {
        &self.security
    }

    pub fn create_topic(&self, name: &str) -> Result<TopicHandle, BrokerError> {
        let topic = Topic::new(name).map_err(|_| BrokerError::InvalidTopic(name.to_owned()))?;
        self.state.lock().topics.entry(topic.clone()).or_default();
        Ok(TopicHandle { topic })
    }

    /// Appends through the trusted API: checks the token, the producer's
    /// manifest and sequencing, labels the source and stamps publish time.
    pub fn publish(&self, mut env: Envelope, token: &str) -> Result<u64, BrokerError> {
        let now = self.clock.now_ms();
        let session = self.security.validate_token(token, now)?;
        if session.subject != env.producer || !self.security.can_write(&session.subject, &env.topic) {
            return Err(BrokerError::Permission { subject: session.subject, topic: env.topic.to_string() });
        }
        let mut st = self.state.lock();
        if !st.topics.contains_key(&env.topic) {
            return Err(BrokerError::UnknownTopic(env.topic.to_string()));
        }
        let key = (env.producer.clone(), env.topic.clone());
        if let Some(&last) = st.last_seq.get(&key) {
            if env.seq <= last {
                return Err(BrokerError::Sequencing {
                    producer: env.producer,
                    topic: env.topic.to_string(),
                    seq: env.seq,
                    last,
                });
            }
        }
        st.last_seq.insert(key, env.seq);
        env.label.source = env.topic.as_str().to_owned();
        if env.label.sink.is_empty() {
            env.label.sink = "*".to_owned();
        }
        env.t_published_ms = now.max(env.t_generated_ms);
        let retention = self.retention;
        let log = st.topics.get_mut(&env.topic).expect("checked above");
        let offset = log.end_offset();
        log.published_bytes += env.payload.len() as u64;
        log.entries.push_back(Arc::new(env));
        if retention > 0 && log.entries.len() > retention {
            log.entries.pop_front();
            log.base_offset += 1;
        }
        drop(st);
        self.appended.notify_all();
        Ok(offset)
    }

    /// Registers `consumer_id` (which must be the token's subject). Existing
    /// matching topics are read from their current end; topics created later
    /// are read from the start.
    pub fn subscribe(&self, consumer_id: &str, patterns: &[&str], token: &str) -> Result<(), BrokerError> {
        let session = self.security.validate_token(token, self.clock.now_ms())?;
        if session.subject != consumer_id {
            return Err(BrokerError::Permission { subject: session.subject, topic: patterns.join(",") });
        }
        for p in patterns {
            validate_pattern(p)?;
        }
        let mut st = self.state.lock();
        if st.subs.contains_key(consumer_id) {
            return Err(BrokerError::AlreadySubscribed(consumer_id.to_owned()));
        }
        let offsets = st
            .topics
            .iter()
            .filter(|(t, _)| patterns.iter().any(|p| pattern_matches(p, t.as_str())))
            .map(|(t, log)| (t.clone(), log.end_offset()))
            .collect();
        st.subs.insert(
            consumer_id.to_owned(),
            SubState {
                patterns: patterns.iter().map(|p| p.to_string()).collect(),
                offsets,
                cursor: 0,
                stats: ConsumerStats::default(),
            },
        );
        Ok(())
    }

    /// Returns up to `cfg.max_batch` flow-admitted envelopes in per-topic log
    /// order. Quarantined entries are consumed but never returned.
    ///
    /// In wall-clock mode a positive `linger_ms` waits for the batch to fill.
    pub fn poll(&self, consumer_id: &str, cfg: &BatchConfig, token: &str) -> Result<Vec<Arc<Envelope>>, BrokerError> {
        if cfg.max_batch == 0 {
            return Err(BrokerError::BadBatch);
        }
        self.security.validate_token(token, self.clock.now_ms())?;
        let linger = (self.clock.mode() == ClockMode::Wall && cfg.linger_ms > 0)
            .then(|| Instant::now() + Duration::from_millis(cfg.linger_ms));
        let mut batch = Vec::new();
        let mut st = self.state.lock();
        loop {
            self.collect(&mut st, consumer_id, cfg.max_batch, &mut batch)?;
            match linger {
                Some(deadline) if batch.len() < cfg.max_batch && Instant::now() < deadline => {
                    self.appended.wait_until(&mut st, deadline);
                }
                _ => break,
            }
        }
        if !batch.is_empty() {
            if let Some(sub) = st.subs.get_mut(consumer_id) {
                sub.stats.non_empty_polls += 1;
            }
        }
        Ok(batch)
    }

    fn collect(&self, st: &mut State, consumer: &str, max: usize, batch: &mut Vec<Arc<Envelope>>) -> Result<(), BrokerError> {
        let now = self.clock.now_ms();
        let State { topics, subs, .. } = st;
        let sub = subs.get_mut(consumer).ok_or_else(|| BrokerError::UnknownConsumer(consumer.to_owned()))?;
        let matched: Vec<&Topic> = topics
            .keys()
            .filter(|t| sub.patterns.iter().any(|p| pattern_matches(p, t.as_str())))
            .filter(|t| self.security.can_read(consumer, t))
            .collect();
        if matched.is_empty() {
            return Ok(());
        }
        let start = sub.cursor % matched.len();
        sub.cursor = sub.cursor.wrapping_add(1);
        for i in 0..matched.len() {
            if batch.len() >= max {
                break;
            }
            let topic = matched[(start + i) % matched.len()];
            let log = &topics[topic];
            let offset = sub.offsets.entry(topic.clone()).or_insert(0);
            if *offset < log.base_offset {
                sub.stats.missed += log.base_offset - *offset;
                *offset = log.base_offset;
            }
            while batch.len() < max && *offset < log.end_offset() {
                let env = &log.entries[(*offset - log.base_offset) as usize];
                *offset += 1;
                match self.security.admit(env, consumer, now) {
                    FlowDecision::Allow => {
                        sub.stats.delivered += 1;
                        sub.stats.delivered_bytes += env.payload.len() as u64;
                        batch.push(env.clone());
                    }
                    FlowDecision::Quarantine(_) => sub.stats.quarantined += 1,
                }
            }
        }
        Ok(())
    }

    pub fn subscription(&self, consumer_id: &str) -> Option<Subscription> {
        self.state.lock().subs.get(consumer_id).map(|s| Subscription {
            consumer_id: consumer_id.to_owned(),
            topic_patterns: s.patterns.clone(),
            offsets: s.offsets.clone(),
        })
    }

    pub fn consumer_stats(&self, consumer_id: &str) -> Option<ConsumerStats> {
        self.state.lock().subs.get(consumer_id).map(|s| s.stats)
    }

    pub fn consumers(&self) -> Vec<String> {
        let mut v: Vec<_> = self.state.lock().subs.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn topics(&self) -> Vec<Topic> {
        self.state.lock().topics.keys().cloned().collect()
    }

    /// Number of envelopes ever appended to `topic`.
    pub fn topic_len(&self, topic: &str) -> Option<u64> {
        let t = Topic::new(topic).ok()?;
        self.state.lock().topics.get(&t).map(TopicLog::end_offset)
    }

    pub fn topic_dropped(&self, topic: &str) -> Option<u64> {
        let t = Topic::new(topic).ok()?;
        self.state.lock().topics.get(&t).map(TopicLog::dropped)
    }

    /// Retained entries of `topic`, oldest first.
    pub fn log(&self, topic: &str) -> Vec<Arc<Envelope>> {
        let Ok(t) = Topic::new(topic) else { return Vec::new() };
        self.state.lock().topics.get(&t).map(|l| l.entries.iter().cloned().collect()).unwrap_or_default()
    }

    pub fn published_bytes(&self) -> u64 {
        self.state.lock().topics.values().map(|l| l.published_bytes).sum()
    }
}
