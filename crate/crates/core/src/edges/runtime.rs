//! Mobile, fixed and system edge runtimes sharing one discrete-event queue.
//!
//! Events are ordered by `(time, edge rank, insertion order)`, where mobiles
//! rank first, then fixed edges, then the system edge. Every edge talks to
//! the others only through the emulated channel or the broker.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{in_range, Channel, NetworkError, NetworkModel, TxOutcome};
use crate::apps::{
    fcw_evaluate, find_preceding, subapp1_collect, subapp2_merge, FcwInput, FcwParams, FcwWarning, TrafficRecord,
    FCW_COMPUTE_MS, NEIGHBOR_STALE_MS, WINDOW_MS,
};
use crate::broker::{BatchConfig, Broker, BrokerError};
use crate::clock::VirtualClock;
use crate::harness::{LatencySample, SampleClass};
use crate::hetnet::{select_medium, AppRequirement, HetNetMonitor, MediumKind};
use crate::model::{distance, Bsm, Envelope, MsgId, Position, Topic, FCW_WARNINGS_TOPIC};
use crate::security::{
    protect_envelope, pseudonym, scrub, unprotect, AccessManifest, Credential, FlowPolicy, KeyMaterial, LinkKind,
    QuarantineReason, QuarantineRecord, Role, SecurityContext, SecurityError, Service,
};
use crate::trace::{MsgIdGen, VehicleSchedule};
use crate::warehouse::{Table, Warehouse};

/// Topic carried by over-the-air BSM envelopes.
pub const V2V_TOPIC: &str = "bsm.v2v";
/// Per-envelope service time of a fixed edge (verify, scrub, protect).
pub const FIXED_SERVICE_US: u64 = 200;
pub const SUBAPP1_POLL_MS: u64 = 10;
pub const SYSTEM_POLL_MS: u64 = 100;
/// A Sub-App 1 window closes this long after its end.
pub const WINDOW_GRACE_MS: u64 = 500;
pub const FCW_MONITOR_ID: &str = "fcw-monitor";

pub fn subapp1_id(fixed: &str) -> String {
    format!("subapp1.{fixed}")
}

pub fn subapp2_id(system: &str) -> String {
    format!("subapp2.{system}")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSite {
    pub id: String,
    pub pos: Position,
}

/// Flow policies for the built-in applications.
pub fn default_policies() -> Vec<FlowPolicy> {
    vec![
        FlowPolicy::allow("bsm.raw.*", "subapp1.*").expect("valid"),
        FlowPolicy::allow("traffic.agg.*", "subapp2.*").expect("valid"),
        FlowPolicy::allow(FCW_WARNINGS_TOPIC, FCW_MONITOR_ID).expect("valid"),
    ]
}

/// Least-privilege manifests for every built-in principal.
pub fn default_manifests(fixed: &[&str], system: &str, mobiles: &[&str]) -> Vec<AccessManifest> {
    let mut out = Vec::new();
    for f in fixed {
        out.push(AccessManifest {
            subject: f.to_string(),
            writable_topics: vec![format!("bsm.raw.{f}"), format!("traffic.agg.{f}"), FCW_WARNINGS_TOPIC.into()],
            readable_topics: vec![],
            services: vec![Service::Warehouse, Service::HetNet],
        });
        out.push(AccessManifest {
            subject: subapp1_id(f),
            writable_topics: vec![],
            readable_topics: vec![format!("bsm.raw.{f}")],
            services: vec![Service::Warehouse],
        });
    }
    out.push(AccessManifest {
        subject: system.to_owned(),
        writable_topics: vec![],
        readable_topics: vec![],
        services: vec![Service::Warehouse, Service::Metrics],
    });
    out.push(AccessManifest {
        subject: subapp2_id(system),
        writable_topics: vec![],
        readable_topics: vec!["traffic.agg.*".into()],
        services: vec![Service::Warehouse],
    });
    out.push(AccessManifest {
        subject: FCW_MONITOR_ID.into(),
        writable_topics: vec![],
        readable_topics: vec![FCW_WARNINGS_TOPIC.into()],
        services: vec![Service::Metrics],
    });
    for m in mobiles {
        out.push(AccessManifest {
            subject: m.to_string(),
            writable_topics: vec![],
            readable_topics: vec![],
            services: vec![Service::HetNet],
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub range_m: f64,
    pub v2v_range_m: f64,
    pub fcw: Option<FcwParams>,
    pub traffic: bool,
    pub tamper_every: Option<u64>,
    /// BSMs are generated strictly before this instant.
    pub gen_end_ms: u64,
    /// No event after this instant is processed.
    pub run_end_ms: u64,
    pub system_id: String,
    /// Keep a log of every fixed-edge reception.
    pub audit: bool,
}

/// Cumulative run counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub bsms_generated: u64,
    pub fixed_received: u64,
    pub raw_published: u64,
    pub dropped: u64,
    pub warnings_emitted: u64,
    pub warnings_delivered: u64,
    pub suspended: u64,
    pub publish_errors: u64,
    pub records_consumed: u64,
    pub snapshots: u64,
    pub late_bsms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstWarning {
    /// Generation time of the BSM that triggered the warning.
    pub tick_ms: u64,
    pub gap_m: f64,
    pub d_w_m: f64,
    pub t_decision_ms: u64,
}

/// One over-the-air BSM reception, kept when auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reception {
    /// Fixed edge id, or the receiving vehicle's id for V2V.
    pub receiver: String,
    pub vehicle_id: String,
    pub v2v: bool,
    pub encrypted: bool,
    pub t_generated_ms: u64,
    pub t_arrival_ms: u64,
}

/// Discrete happenings surfaced to observers. Vehicle ids are pseudonymized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Notice {
    FcwWarning(FcwWarning),
    QuarantineRecord(QuarantineRecord),
}

struct MobileEdge {
    id: String,
    schedule: VehicleSchedule,
    cred: Credential,
    keys: KeyMaterial,
    seq: u64,
    warn_seq: u64,
    neighbors: BTreeMap<String, (Bsm, u64)>,
}

struct FixedEdge {
    site: FixedSite,
    keys: KeyMaterial,
    token: String,
    app_id: String,
    app_token: String,
    raw: Topic,
    agg: Topic,
    busy_until_us: u64,
    backhaul_last_ms: u64,
    seqs: BTreeMap<Topic, u64>,
    windows: BTreeMap<u64, Vec<Bsm>>,
    closed_before: u64,
}

struct SystemEdge {
    app_id: String,
    app_token: String,
    monitor_token: String,
    pending: BTreeMap<u64, Vec<TrafficRecord>>,
}

enum Event {
    MobileTick { m: usize, k: usize },
    V2vArrive { m: usize, env: Arc<Envelope> },
    FixedArrive { f: usize, env: Arc<Envelope> },
    BrokerPublish { f: usize, env: Envelope },
    SubApp1Poll { f: usize },
    WindowClose { f: usize, w: u64 },
    SystemPoll,
}

struct Queued {
    t: u64,
    rank: usize,
    seq: u64,
    ev: Event,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.rank, self.seq) == (o.t, o.rank, o.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, o: &Self) -> Ordering {
        (o.t, o.rank, o.seq).cmp(&(self.t, self.rank, self.seq))
    }
}

/// The shared services an edge network runs on.
pub struct Platform {
    pub clock: Arc<VirtualClock>,
    pub security: Arc<SecurityContext>,
    pub broker: Arc<Broker>,
    pub hetnet: Arc<HetNetMonitor>,
    pub warehouse: Arc<Warehouse>,
}

pub struct Sim {
    p: Platform,
    channel: Channel,
    link_key: [u8; 32],
    cfg: SimConfig,
    mobiles: Vec<MobileEdge>,
    fixed: Vec<FixedEdge>,
    system: SystemEdge,
    queue: BinaryHeap<Queued>,
    next_seq: u64,
    ids: MsgIdGen,
    dsrc_sent: u64,
    mobile_ids: HashSet<String>,
    quarantine_seen: usize,
    notices: Vec<Notice>,
    pub delivery: Vec<LatencySample>,
    pub fcw: Vec<LatencySample>,
    pub counters: Counters,
    pub first_warning: Option<FirstWarning>,
    pub receptions: Vec<Reception>,
}

impl Sim {
    /// Registers every principal, installs policies and manifests, creates
    /// topics and subscriptions, and queues the first events.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: Platform,
        network: NetworkModel,
        seed: u64,
        link_key: [u8; 32],
        vehicles: Vec<VehicleSchedule>,
        sites: Vec<FixedSite>,
        policies: Vec<FlowPolicy>,
        manifests: Vec<AccessManifest>,
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        let sec = p.security.clone();
        let now = 0;
        sec.set_policies(policies)?;
        for m in manifests {
            sec.declare_manifest(m)?;
        }
        sec.seal_manifests();
        let token_for = |id: &str, role: Role| -> Result<(Credential, String), SimError> {
            let cred = sec.register_and_issue(id, role, now)?;
            let tok = sec.authenticate(&cred.certificate, now)?.token;
            Ok((cred, tok))
        };

        let mut mobiles = Vec::with_capacity(vehicles.len());
        for schedule in vehicles {
            let (cred, _) = token_for(&schedule.vehicle_id, Role::MobileEdge)?;
            mobiles.push(MobileEdge {
                id: schedule.vehicle_id.clone(),
                keys: KeyMaterial::new(cred.signing_key.clone(), None),
                cred,
                schedule,
                seq: 0,
                warn_seq: 0,
                neighbors: BTreeMap::new(),
            });
        }

        p.broker.create_topic(FCW_WARNINGS_TOPIC)?;
        let mut fixed = Vec::with_capacity(sites.len());
        for site in sites {
            let (cred, token) = token_for(&site.id, Role::FixedEdge)?;
            let app_id = subapp1_id(&site.id);
            let (_, app_token) = token_for(&app_id, Role::Application)?;
            let raw = p.broker.create_topic(&format!("bsm.raw.{}", site.id))?.topic;
            let agg = p.broker.create_topic(&format!("traffic.agg.{}", site.id))?.topic;
            p.broker.subscribe(&app_id, &[raw.as_str()], &app_token)?;
            fixed.push(FixedEdge {
                keys: KeyMaterial::new(cred.signing_key, Some(link_key)),
                token,
                app_id,
                app_token,
                raw,
                agg,
                site,
                busy_until_us: 0,
                backhaul_last_ms: 0,
                seqs: BTreeMap::new(),
                windows: BTreeMap::new(),
                closed_before: 0,
            });
        }

        token_for(&cfg.system_id, Role::SystemEdge)?;
        let app_id = subapp2_id(&cfg.system_id);
        let (_, app_token) = token_for(&app_id, Role::Application)?;
        let (_, monitor_token) = token_for(FCW_MONITOR_ID, Role::Application)?;
        p.broker.subscribe(&app_id, &["traffic.agg.*"], &app_token)?;
        p.broker.subscribe(FCW_MONITOR_ID, &[FCW_WARNINGS_TOPIC], &monitor_token)?;
        let system = SystemEdge { app_id, app_token, monitor_token, pending: BTreeMap::new() };

        let channel = Channel::new(network, seed, Some(p.hetnet.clone()));
        let mobile_ids = mobiles.iter().map(|m| m.id.clone()).collect();
        let mut sim = Self {
            p,
            channel,
            link_key,
            cfg,
            mobiles,
            fixed,
            system,
            queue: BinaryHeap::new(),
            next_seq: 0,
            ids: MsgIdGen::starting_at(1),
            dsrc_sent: 0,
            mobile_ids,
            quarantine_seen: 0,
            notices: Vec::new(),
            delivery: Vec::new(),
            fcw: Vec::new(),
            counters: Counters::default(),
            first_warning: None,
            receptions: Vec::new(),
        };
        sim.seed_events();
        Ok(sim)
    }

    fn seed_events(&mut self) {
        for m in 0..self.mobiles.len() {
            if let Some(s) = self.mobiles[m].schedule.samples.first() {
                if s.t_ms < self.cfg.gen_end_ms {
                    self.push(s.t_ms, Event::MobileTick { m, k: 0 });
                }
            }
        }
        if self.cfg.traffic {
            for f in 0..self.fixed.len() {
                self.push(0, Event::SubApp1Poll { f });
                if self.cfg.gen_end_ms > 0 {
                    self.push(WINDOW_MS + WINDOW_GRACE_MS, Event::WindowClose { f, w: 0 });
                }
            }
        }
        self.push(0, Event::SystemPoll);
    }

    fn rank(&self, ev: &Event) -> usize {
        let nm = self.mobiles.len();
        match ev {
            Event::MobileTick { m, .. } | Event::V2vArrive { m, .. } => *m,
            Event::FixedArrive { f, .. }
            | Event::BrokerPublish { f, .. }
            | Event::SubApp1Poll { f }
            | Event::WindowClose { f, .. } => nm + f,
            Event::SystemPoll => nm + self.fixed.len(),
        }
    }

    fn push(&mut self, t: u64, ev: Event) {
        let rank = self.rank(&ev);
        self.next_seq += 1;
        self.queue.push(Queued { t, rank, seq: self.next_seq, ev });
    }

    pub fn platform(&self) -> &Platform {
        &self.p
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Time of the next event that will still be processed.
    pub fn next_time(&self) -> Option<u64> {
        self.queue.peek().map(|q| q.t).filter(|t| *t <= self.cfg.run_end_ms)
    }

    /// Processes one event; `None` once the run is over.
    pub fn step(&mut self) -> Option<u64> {
        let t = self.next_time()?;
        let q = self.queue.pop().expect("peeked");
        self.p.clock.set(t);
        match q.ev {
            Event::MobileTick { m, k } => self.mobile_tick(t, m, k),
            Event::V2vArrive { m, env } => self.mobile_receive(t, m, env),
            Event::FixedArrive { f, env } => self.fixed_receive(t, f, env),
            Event::BrokerPublish { f, env } => self.fixed_publish(f, env),
            Event::SubApp1Poll { f } => self.subapp1_poll(t, f),
            Event::WindowClose { f, w } => self.subapp1_close(t, f, w),
            Event::SystemPoll => self.system_poll(t),
        }
        self.collect_quarantine();
        Some(t)
    }

    /// Merges windows still waiting on records and stores the quarantine log.
    pub fn finish(&mut self) {
        let pending = std::mem::take(&mut self.system.pending);
        for (t0, recs) in pending {
            self.store_snapshot(t0, &recs);
        }
        let q = self.quarantine_records();
        if let Err(e) = self.p.warehouse.put(Table::Quarantine, &q) {
            log::error!("warehouse: {e}");
        }
    }

    pub fn take_notices(&mut self) -> Vec<Notice> {
        std::mem::take(&mut self.notices)
    }

    /// Quarantine log with vehicle ids pseudonymized.
    pub fn quarantine_records(&self) -> Vec<QuarantineRecord> {
        self.p.security.quarantine().records().into_iter().map(|r| self.sanitize(r)).collect()
    }

    /// Payload bytes handed to Sub-App 1 consumers.
    pub fn delivered_bytes(&self) -> u64 {
        self.fixed.iter().filter_map(|f| self.p.broker.consumer_stats(&f.app_id)).map(|s| s.delivered_bytes).sum()
    }

    fn sanitize(&self, mut r: QuarantineRecord) -> QuarantineRecord {
        let salt = self.p.security.salt();
        if self.mobile_ids.contains(&r.envelope.producer) {
            r.envelope.producer = pseudonym(&r.envelope.producer, salt);
        }
        if self.mobile_ids.contains(&r.consumer) {
            r.consumer = pseudonym(&r.consumer, salt);
        }
        r
    }

    fn collect_quarantine(&mut self) {
        let log = self.p.security.quarantine();
        if log.len() > self.quarantine_seen {
            let fresh = log.records_since(self.quarantine_seen);
            self.quarantine_seen += fresh.len();
            for r in fresh {
                let r = self.sanitize(r);
                self.notices.push(Notice::QuarantineRecord(r));
            }
        }
    }

    fn transmit(&mut self, medium: MediumKind, t: u64) -> Option<u64> {
        match self.channel.transmit(medium, t) {
            Ok(TxOutcome::Delivered { arrival_t_ms }) => Some(arrival_t_ms),
            Ok(TxOutcome::Lost) => {
                self.counters.dropped += 1;
                None
            }
            Err(e) => {
                log::error!("channel: {e}");
                self.counters.dropped += 1;
                None
            }
        }
    }

    /// Sends over DSRC, corrupting the copy when a tamper fault is due.
    fn transmit_dsrc(&mut self, env: &Arc<Envelope>, t: u64) -> Option<(u64, Arc<Envelope>)> {
        self.dsrc_sent += 1;
        let arrival = self.transmit(MediumKind::Dsrc, t)?;
        let tampered = self.cfg.tamper_every.is_some_and(|n| n > 0 && self.dsrc_sent.is_multiple_of(n));
        let env = if tampered && !env.payload.is_empty() {
            let mut bad = (**env).clone();
            let i = bad.payload.len() / 2;
            bad.payload[i] ^= 0x01;
            Arc::new(bad)
        } else {
            env.clone()
        };
        Some((arrival, env))
    }

    fn mobile_tick(&mut self, t: u64, m: usize, k: usize) {
        let me = &self.mobiles[m];
        if let Some(next) = me.schedule.samples.get(k + 1) {
            if next.t_ms < self.cfg.gen_end_ms {
                let nt = next.t_ms;
                self.push(nt, Event::MobileTick { m, k: k + 1 });
            }
        }
        let me = &mut self.mobiles[m];
        if !me.cred.certificate.is_valid_at(t) {
            self.counters.suspended += 1;
            log::warn!("mobile {}: credential not valid at {t} ms, broadcast suspended", me.id);
            return;
        }
        let sample = me.schedule.samples[k];
        let bsm = sample.to_bsm(&me.id, self.ids.next_id());
        me.seq += 1;
        let env = Envelope::new(
            Topic::new(V2V_TOPIC).expect("valid"),
            me.id.clone(),
            me.seq,
            t,
            serde_json::to_vec(&bsm).expect("bsm encodes"),
        );
        let env = Arc::new(protect_envelope(env, LinkKind::V2V, &me.keys).expect("mobile has a signing key"));
        self.counters.bsms_generated += 1;

        for f in 0..self.fixed.len() {
            if in_range(sample.pos, self.fixed[f].site.pos, self.cfg.range_m).unwrap_or(false) {
                if let Some((at, e)) = self.transmit_dsrc(&env, t) {
                    self.push(at, Event::FixedArrive { f, env: e });
                }
            }
        }
        if self.cfg.fcw.is_some() {
            for j in 0..self.mobiles.len() {
                if j == m {
                    continue;
                }
                let Some(pos) = active_position(&self.mobiles[j].schedule, t) else { continue };
                if in_range(sample.pos, pos, self.cfg.v2v_range_m).unwrap_or(false) {
                    if let Some((at, e)) = self.transmit_dsrc(&env, t) {
                        self.push(at, Event::V2vArrive { m: j, env: e });
                    }
                }
            }
        }
    }

    fn mobile_receive(&mut self, now: u64, m: usize, env: Arc<Envelope>) {
        if self.cfg.audit {
            self.receptions.push(Reception {
                receiver: self.mobiles[m].id.clone(),
                vehicle_id: env.producer.clone(),
                v2v: true,
                encrypted: env.encrypted,
                t_generated_ms: env.t_generated_ms,
                t_arrival_ms: now,
            });
        }
        if self.p.security.verify_ingress(&env, &self.mobiles[m].id, now).is_err() {
            return;
        }
        let Ok(bsm) = serde_json::from_slice::<Bsm>(&env.payload) else { return };
        let me = &mut self.mobiles[m];
        me.neighbors.retain(|_, (_, at)| now - *at <= NEIGHBOR_STALE_MS);
        me.neighbors.insert(bsm.vehicle_id.clone(), (bsm.clone(), now));
        let Some(params) = self.cfg.fcw else { return };
        let Some(own) = me.schedule.sample_at(bsm.t_generated_ms) else { return };
        let own_bsm = own.to_bsm(&me.id, MsgId(0));
        let fresh: Vec<Bsm> = me.neighbors.values().map(|(b, _)| b.clone()).collect();
        let Some((lead, gap)) = find_preceding(&own_bsm, &fresh) else { return };
        if lead.vehicle_id != bsm.vehicle_id {
            return;
        }
        let t_decision = now + FCW_COMPUTE_MS;
        let input = FcwInput { v_o_mps: bsm.speed_mps, v_t_mps: own_bsm.speed_mps, gap_m: gap };
        let out = match fcw_evaluate(&input, &params, t_decision) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("fcw: {e}");
                return;
            }
        };
        self.fcw.push(LatencySample::new(bsm.msg_id, SampleClass::Fcw, bsm.t_generated_ms, t_decision));
        if !out.warn {
            return;
        }
        self.counters.warnings_emitted += 1;
        if self.first_warning.is_none() {
            self.first_warning =
                Some(FirstWarning { tick_ms: bsm.t_generated_ms, gap_m: gap, d_w_m: out.d_w_m, t_decision_ms: t_decision });
        }
        let warning = FcwWarning {
            follower_pseudonym: me.id.clone(),
            preceding_pseudonym: bsm.vehicle_id.clone(),
            gap_m: gap,
            d_w_m: out.d_w_m,
            t_decision_ms: t_decision,
        };
        me.warn_seq += 1;
        let env = Envelope::new(
            Topic::fcw_warnings(),
            me.id.clone(),
            me.warn_seq,
            t_decision,
            serde_json::to_vec(&warning).expect("warning encodes"),
        );
        let env = Arc::new(protect_envelope(env, LinkKind::V2V, &me.keys).expect("mobile has a signing key"));
        let own_pos = own.pos;

        let mut snap = (*self.p.hetnet.metadata()).clone();
        if let Some(fiber) = snap.media.get_mut(&MediumKind::Fiber) {
            fiber.available = false;
        }
        let medium = match select_medium(&AppRequirement::safety(), &snap) {
            Ok(sel) => sel.medium,
            Err(e) => {
                log::warn!("fcw uplink: {e}");
                self.counters.dropped += 1;
                return;
            }
        };
        let nearest = (0..self.fixed.len()).min_by(|&a, &b| {
            distance(own_pos, self.fixed[a].site.pos).total_cmp(&distance(own_pos, self.fixed[b].site.pos))
        });
        let Some(f) = nearest else { return };
        let arrival = if medium == MediumKind::Dsrc { self.transmit_dsrc(&env, t_decision) } else {
            self.transmit(medium, t_decision).map(|at| (at, env))
        };
        if let Some((at, env)) = arrival {
            self.push(at, Event::FixedArrive { f, env });
        }
    }

    fn fixed_receive(&mut self, now: u64, f: usize, env: Arc<Envelope>) {
        let is_bsm = env.topic.as_str() == V2V_TOPIC;
        if is_bsm {
            self.counters.fixed_received += 1;
            if self.cfg.audit {
                self.receptions.push(Reception {
                    receiver: self.fixed[f].site.id.clone(),
                    vehicle_id: env.producer.clone(),
                    v2v: false,
                    encrypted: env.encrypted,
                    t_generated_ms: env.t_generated_ms,
                    t_arrival_ms: now,
                });
            }
        }
        if self.p.security.verify_ingress(&env, &self.fixed[f].site.id, now).is_err() {
            return;
        }
        let fx = &mut self.fixed[f];
        let start = (now * 1000).max(fx.busy_until_us);
        fx.busy_until_us = start + FIXED_SERVICE_US;
        let t_done = fx.busy_until_us.div_ceil(1000);
        let topic = if is_bsm {
            fx.raw.clone()
        } else if env.topic.as_str() == FCW_WARNINGS_TOPIC {
            Topic::fcw_warnings()
        } else {
            log::warn!("fixed {}: unexpected topic {}", fx.site.id, env.topic);
            return;
        };
        let clean = scrub((*env).clone(), self.p.security.salt());
        self.send_upstream(f, topic, env.t_generated_ms, clean.payload, t_done);
    }

    /// V2I leg toward the broker over the fixed edge's FIFO backhaul.
    fn send_upstream(&mut self, f: usize, topic: Topic, t_gen: u64, payload: Vec<u8>, send_t: u64) {
        let fx = &mut self.fixed[f];
        let seq = fx.seqs.entry(topic.clone()).or_insert(0);
        *seq += 1;
        let env = Envelope::new(topic, fx.site.id.clone(), *seq, t_gen, payload);
        let env = protect_envelope(env, LinkKind::V2I, &fx.keys).expect("fixed edge has keys");
        let Some(at) = self.transmit(MediumKind::Fiber, send_t) else { return };
        let fx = &mut self.fixed[f];
        let at = at.max(fx.backhaul_last_ms);
        fx.backhaul_last_ms = at;
        self.push(at, Event::BrokerPublish { f, env });
    }

    fn fixed_publish(&mut self, f: usize, env: Envelope) {
        let fx = &self.fixed[f];
        let is_raw = env.topic == fx.raw;
        match self.p.broker.publish(env, &fx.token) {
            Ok(_) if is_raw => self.counters.raw_published += 1,
            Ok(_) => {}
            Err(e) => {
                self.counters.publish_errors += 1;
                log::warn!("fixed {}: publish failed: {e}", fx.site.id);
            }
        }
    }

    /// Verifies and decrypts an infrastructure envelope.
    fn open(&self, env: &Arc<Envelope>, consumer: &str, now: u64) -> Option<Vec<u8>> {
        let opened = self
            .p
            .security
            .verifying_key(&env.producer, now)
            .and_then(|key| unprotect(env, &key, Some(&self.link_key)));
        match opened {
            Ok(p) => Some(p),
            Err(e) => {
                let reason = if e == SecurityError::Expired { QuarantineReason::Expired } else { QuarantineReason::BadSignature };
                self.p.security.quarantine().push(env.clone(), consumer, reason, now);
                None
            }
        }
    }

    fn subapp1_poll(&mut self, now: u64, f: usize) {
        let fx = &self.fixed[f];
        let batch = match self.p.broker.poll(&fx.app_id, &BatchConfig::default(), &fx.app_token) {
            Ok(b) => b,
            Err(e) => {
                log::error!("{}: poll failed: {e}", fx.app_id);
                Vec::new()
            }
        };
        let app_id = fx.app_id.clone();
        let mut rows = Vec::with_capacity(batch.len());
        let mut samples = Vec::with_capacity(batch.len());
        for env in &batch {
            let Some(plain) = self.open(env, &app_id, now) else { continue };
            let Ok(bsm) = serde_json::from_slice::<Bsm>(&plain) else {
                log::warn!("{app_id}: undecodable BSM");
                continue;
            };
            samples.push(LatencySample::new(bsm.msg_id, SampleClass::Delivery, bsm.t_generated_ms, now));
            let w = bsm.t_generated_ms / WINDOW_MS;
            let fx = &mut self.fixed[f];
            if w < fx.closed_before {
                self.counters.late_bsms += 1;
            } else {
                fx.windows.entry(w).or_default().push(bsm.clone());
            }
            rows.push(bsm);
        }
        if !rows.is_empty() {
            if let Err(e) = self.p.warehouse.put(Table::Bsm, &rows).and_then(|_| self.p.warehouse.put(Table::LatencySample, &samples)) {
                log::error!("warehouse: {e}");
            }
        }
        self.delivery.extend(samples);
        if now + SUBAPP1_POLL_MS <= self.cfg.run_end_ms {
            self.push(now + SUBAPP1_POLL_MS, Event::SubApp1Poll { f });
        }
    }

    fn subapp1_close(&mut self, now: u64, f: usize, w: u64) {
        let window = (w * WINDOW_MS, (w + 1) * WINDOW_MS);
        let fx = &mut self.fixed[f];
        let bsms = fx.windows.remove(&w).unwrap_or_default();
        fx.closed_before = w + 1;
        let record = subapp1_collect(&bsms, window, &fx.site.id).expect("window holds only its own BSMs");
        let topic = fx.agg.clone();
        self.send_upstream(f, topic, window.1, serde_json::to_vec(&record).expect("record encodes"), now);
        if window.1 < self.cfg.gen_end_ms {
            self.push(window.1 + WINDOW_MS + WINDOW_GRACE_MS, Event::WindowClose { f, w: w + 1 });
        }
    }

    fn system_poll(&mut self, now: u64) {
        let cfg = BatchConfig::default();
        let batch = self.p.broker.poll(&self.system.app_id, &cfg, &self.system.app_token).unwrap_or_else(|e| {
            log::error!("{}: poll failed: {e}", self.system.app_id);
            Vec::new()
        });
        let app_id = self.system.app_id.clone();
        for env in &batch {
            let Some(plain) = self.open(env, &app_id, now) else { continue };
            let Ok(rec) = serde_json::from_slice::<TrafficRecord>(&plain) else { continue };
            self.counters.records_consumed += 1;
            if let Err(e) = self.p.warehouse.put(Table::TrafficRecord, std::slice::from_ref(&rec)) {
                log::error!("warehouse: {e}");
            }
            let t0 = rec.t0_ms;
            let group = self.system.pending.entry(t0).or_default();
            group.push(rec);
            if group.len() == self.fixed.len() {
                let recs = self.system.pending.remove(&t0).expect("present");
                self.store_snapshot(t0, &recs);
            }
        }
        let warnings = self.p.broker.poll(FCW_MONITOR_ID, &cfg, &self.system.monitor_token).unwrap_or_else(|e| {
            log::error!("{FCW_MONITOR_ID}: poll failed: {e}");
            Vec::new()
        });
        for env in &warnings {
            let Some(plain) = self.open(env, FCW_MONITOR_ID, now) else { continue };
            if let Ok(w) = serde_json::from_slice::<FcwWarning>(&plain) {
                self.counters.warnings_delivered += 1;
                self.notices.push(Notice::FcwWarning(w));
            }
        }
        if now + SYSTEM_POLL_MS <= self.cfg.run_end_ms {
            self.push(now + SYSTEM_POLL_MS, Event::SystemPoll);
        }
    }

    fn store_snapshot(&mut self, t0: u64, recs: &[TrafficRecord]) {
        match subapp2_merge((t0, t0 + WINDOW_MS), recs) {
            Ok(snap) => {
                self.counters.snapshots += 1;
                if let Err(e) = self.p.warehouse.put(Table::Snapshot, &[snap]) {
                    log::error!("warehouse: {e}");
                }
            }
            Err(e) => log::error!("subapp2: {e}"),
        }
    }
}

/// Position of a vehicle at `t_ms` if its trace covers that instant.
fn active_position(s: &VehicleSchedule, t_ms: u64) -> Option<Position> {
    let last = s.samples.last()?;
    if t_ms > last.t_ms {
        return None;
    }
    s.sample_at(t_ms).map(|x| x.pos)
}
