//! Oracles shared by the integration tests and the acceptance runner. Each
//! check returns a description of the first violation instead of panicking
//! so the acceptance runner can report it.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use cvdep::broker::{BatchConfig, Broker};
use cvdep::clock::VirtualClock;
use cvdep::harness::{run_link_key, run_scenario_with, PairSpec, RunOptions, RunOutcome, Scenario, TraceSpec};
use cvdep::hetnet::{select_medium, AppRequirement, MediumKind, MediumStats, MetadataSnapshot};
use cvdep::model::{Envelope, Label, Topic};
use cvdep::security::{
    check_flow, open_payload, AccessManifest, FlowDecision, FlowPolicy, QuarantineReason, Role, SecurityContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check<T = ()> = Result<T, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Pattern matcher written independently of the library: walks characters
/// and treats a final `*` as "anything from here on".
pub fn brute_match(pattern: &str, value: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let v: Vec<char> = value.chars().collect();
    for (i, c) in p.iter().enumerate() {
        if *c == '*' && i + 1 == p.len() {
            return true;
        }
        if v.get(i) != Some(c) {
            return false;
        }
    }
    p.len() == v.len()
}

/// Expected flow decision by exhaustive search over the policies.
pub fn brute_decision(source: &str, sink_label: &str, consumer: &str, policies: &[FlowPolicy]) -> FlowDecision {
    let mut admitted = false;
    for p in policies {
        if brute_match(&p.source_pattern, source) && brute_match(&p.sink_pattern, consumer) {
            admitted = true;
        }
    }
    if !admitted {
        FlowDecision::Quarantine(QuarantineReason::NoPolicy)
    } else if !brute_match(sink_label, consumer) {
        FlowDecision::Quarantine(QuarantineReason::SinkMismatch)
    } else {
        FlowDecision::Allow
    }
}

// ---------------------------------------------------------------- broker

pub struct Bench {
    pub clock: Arc<VirtualClock>,
    pub sec: Arc<SecurityContext>,
    pub broker: Broker,
    pub tokens: HashMap<String, String>,
}

/// Broker with `producers` writing and `consumers` reading every `topic.*`.
pub fn bench(seed: u64, producers: &[String], consumers: &[String], topics: &[String], policies: Vec<FlowPolicy>) -> Bench {
    let clock = Arc::new(VirtualClock::new(0));
    let sec = Arc::new(SecurityContext::new(seed));
    sec.set_policies(policies).unwrap();
    let mut tokens = HashMap::new();
    for (ids, role) in [(producers, Role::FixedEdge), (consumers, Role::Application)] {
        for id in ids {
            let (w, r) = if role == Role::FixedEdge { (vec!["topic.*".into()], vec![]) } else { (vec![], vec!["topic.*".into()]) };
            sec.declare_manifest(AccessManifest { subject: id.clone(), writable_topics: w, readable_topics: r, services: vec![] })
                .unwrap();
            let cred = sec.register_and_issue(id, role, 0).unwrap();
            tokens.insert(id.clone(), sec.authenticate(&cred.certificate, 0).unwrap().token);
        }
    }
    sec.seal_manifests();
    let broker = Broker::new(clock.clone(), sec.clone());
    for t in topics {
        broker.create_topic(t).unwrap();
    }
    Bench { clock, sec, broker, tokens }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgKey {
    pub topic: String,
    pub producer: String,
    pub seq: u64,
}

fn key_of(e: &Envelope) -> MsgKey {
    MsgKey { topic: e.topic.as_str().to_owned(), producer: e.producer.clone(), seq: e.seq }
}

fn multiset(keys: impl IntoIterator<Item = MsgKey>) -> BTreeMap<MsgKey, usize> {
    let mut m = BTreeMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

#[derive(Debug, Default, Clone, Copy)]
pub struct BrokerCheck {
    pub published: usize,
    pub delivered: usize,
    pub quarantined: usize,
    pub polls: usize,
}

/// Random workload of `n_msgs` messages: up to 3 producers, 2 topics and 2
/// consumers with random subscriptions, policies and sink labels, polled at
/// random points with random batch sizes and drained at the end.
pub fn broker_workload(seed: u64, n_msgs: usize) -> Check<BrokerCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let producers: Vec<String> = (0..rng.random_range(1..=3)).map(|i| format!("prod{i}")).collect();
    let topics: Vec<String> = (0..rng.random_range(1..=2)).map(|i| format!("topic.t{i}")).collect();
    let consumers: Vec<String> = (0..rng.random_range(1..=2)).map(|i| format!("cons{i}")).collect();
    let mut policies = Vec::new();
    for t in &topics {
        for c in &consumers {
            if rng.random_bool(0.6) {
                policies.push(FlowPolicy::allow(t.clone(), c.clone()).unwrap());
            }
        }
    }
    if rng.random_bool(0.3) {
        policies.push(FlowPolicy::allow("topic.*", "cons1").unwrap());
    }
    let b = bench(seed, &producers, &consumers, &topics, policies.clone());

    let mut subs: HashMap<String, Vec<String>> = HashMap::new();
    for c in &consumers {
        let chosen: Vec<String> = if rng.random_bool(0.3) {
            vec!["topic.*".into()]
        } else {
            let s: Vec<String> = topics.iter().filter(|_| rng.random_bool(0.7)).cloned().collect();
            if s.is_empty() { vec![topics[0].clone()] } else { s }
        };
        let refs: Vec<&str> = chosen.iter().map(String::as_str).collect();
        b.broker.subscribe(c, &refs, &b.tokens[c]).map_err(|e| e.to_string())?;
        subs.insert(c.clone(), chosen);
    }

    let mut published: Vec<(MsgKey, String)> = Vec::new();
    let mut delivered: HashMap<String, Vec<MsgKey>> = HashMap::new();
    let mut polls = 0;
    let mut seqs: HashMap<String, u64> = HashMap::new();
    let poll = |c: &str, max: usize, out: &mut HashMap<String, Vec<MsgKey>>| -> Check<usize> {
        let cfg = BatchConfig::new(max, 0).unwrap();
        let batch = b.broker.poll(c, &cfg, &b.tokens[c]).map_err(|e| e.to_string())?;
        ensure!(batch.len() <= max, "batch of {} exceeds max_batch {max}", batch.len());
        out.entry(c.to_owned()).or_default().extend(batch.iter().map(|e| key_of(e)));
        Ok(batch.len())
    };
    for i in 0..n_msgs {
        let p = &producers[rng.random_range(0..producers.len())];
        let t = &topics[rng.random_range(0..topics.len())];
        let seq = seqs.entry(p.clone()).or_insert(0);
        *seq += 1;
        let sink = if rng.random_bool(0.7) { "*".to_owned() } else { consumers[rng.random_range(0..consumers.len())].clone() };
        let mut env = Envelope::new(Topic::new(t.as_str()).unwrap(), p.clone(), *seq, i as u64, format!("{p}/{seq}").into_bytes());
        env.label = Label { source: String::new(), sink: sink.clone() };
        b.clock.set(i as u64);
        b.broker.publish(env, &b.tokens[p]).map_err(|e| e.to_string())?;
        published.push((MsgKey { topic: t.clone(), producer: p.clone(), seq: *seq }, sink));
        if rng.random_bool(0.1) {
            let c = &consumers[rng.random_range(0..consumers.len())];
            poll(c, rng.random_range(1..=64), &mut delivered)?;
            polls += 1;
        }
    }

    let mut totals = BrokerCheck { published: published.len(), polls, ..Default::default() };
    for c in &consumers {
        let eligible: Vec<&(MsgKey, String)> =
            published.iter().filter(|(k, _)| subs[c].iter().any(|p| brute_match(p, &k.topic))).collect();
        let expect_ok: Vec<MsgKey> = eligible
            .iter()
            .filter(|(k, sink)| brute_decision(&k.topic, sink, c, &policies) == FlowDecision::Allow)
            .map(|(k, _)| k.clone())
            .collect();

        let max = rng.random_range(1..=64);
        let before = delivered.get(c).map_or(0, Vec::len);
        let pending = expect_ok.len().saturating_sub(before);
        let mut non_empty = 0;
        loop {
            let n = poll(c, max, &mut delivered)?;
            if n == 0 {
                break;
            }
            non_empty += 1;
            ensure!(non_empty <= pending.div_ceil(max), "{c}: more than ceil({pending}/{max}) non-empty polls");
        }

        let got = delivered.remove(c).unwrap_or_default();
        let quarantined: Vec<MsgKey> = b
            .sec
            .quarantine()
            .records()
            .into_iter()
            .filter(|r| r.consumer == *c)
            .map(|r| MsgKey { topic: r.envelope.topic.as_str().to_owned(), producer: r.envelope.producer, seq: r.envelope.seq })
            .collect();
        ensure!(multiset(got.clone()) == multiset(expect_ok.clone()), "seed {seed} {c}: delivered multiset differs from oracle");
        let all = multiset(got.iter().cloned().chain(quarantined.iter().cloned()));
        ensure!(all == multiset(eligible.iter().map(|(k, _)| k.clone())), "seed {seed} {c}: delivered + quarantined != published");
        let mut last: HashMap<(String, String), u64> = HashMap::new();
        for k in &got {
            let prev = last.insert((k.producer.clone(), k.topic.clone()), k.seq);
            ensure!(prev.is_none_or(|p| p < k.seq), "seed {seed} {c}: producer order broken at {k:?}");
        }
        let stats = b.broker.consumer_stats(c).ok_or("missing stats")?;
        ensure!(stats.delivered as usize == got.len(), "{c}: stats.delivered mismatch");
        ensure!(stats.quarantined as usize == quarantined.len(), "{c}: stats.quarantined mismatch");
        totals.delivered += got.len();
        totals.quarantined += quarantined.len();
    }
    Ok(totals)
}

// ---------------------------------------------------------------- flow

const GRID_SOURCES: [&str; 5] = ["bsm.raw.f1", "bsm.raw.f2", "traffic.agg.f1", "fcw.warnings", "bsm.v2v"];
const GRID_SINKS: [&str; 4] = ["subapp1.f1", "subapp1.f2", "subapp2.s1", "fcw-monitor"];
const PATTERN_POOL: [&str; 12] = [
    "*", "bsm.*", "bsm.raw.*", "bsm.raw.f1", "traffic.*", "fcw.warnings", "subapp1.*", "subapp1.f1", "subapp2.s1",
    "fcw-*", "sub*", "bsm.raw.f2",
];

/// Exhaustive 5 × 4 grid under `rounds` random 3-policy sets and every sink
/// label in the pool. Returns the number of decisions compared.
pub fn flow_grid(rounds: u64) -> Check<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf10);
    let mut compared = 0;
    for _ in 0..rounds {
        let policies: Vec<FlowPolicy> = (0..3)
            .map(|_| {
                let s = PATTERN_POOL[rng.random_range(0..PATTERN_POOL.len())];
                let k = PATTERN_POOL[rng.random_range(0..PATTERN_POOL.len())];
                FlowPolicy::allow(s, k).unwrap()
            })
            .collect();
        for src in GRID_SOURCES {
            for sink in GRID_SINKS {
                for label_sink in ["*", "subapp1.*", "subapp2.s1", "fcw-monitor"] {
                    let label = Label { source: src.into(), sink: label_sink.into() };
                    let got = check_flow(&label, sink, &policies);
                    let want = brute_decision(src, label_sink, sink, &policies);
                    ensure!(got == want, "({src}, {sink}, label sink {label_sink}) under {policies:?}: {got:?} != {want:?}");
                    compared += 1;
                }
            }
        }
    }
    Ok(compared)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FlowFuzz {
    pub delivered: usize,
    pub quarantined: usize,
}

/// Publishes `n` random messages and verifies every delivery was preceded
/// by an Allow decision that the oracle agrees with, and that quarantine
/// accounting is exact per consumer.
pub fn flow_fuzz(seed: u64, n: usize) -> Check<FlowFuzz> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics: Vec<String> = ["topic.raw.f1", "topic.raw.f2", "topic.agg.f1"].map(String::from).to_vec();
    let consumers: Vec<String> = ["app.a", "app.b", "app.c"].map(String::from).to_vec();
    let producers: Vec<String> = ["edge.f1", "edge.f2"].map(String::from).to_vec();
    let policies = vec![
        FlowPolicy::allow("topic.raw.*", "app.a").unwrap(),
        FlowPolicy::allow("topic.agg.f1", "app.*").unwrap(),
        FlowPolicy::allow("topic.raw.f2", "app.b").unwrap(),
    ];
    let b = bench(seed, &producers, &consumers, &topics, policies.clone());
    b.sec.record_allows();
    for c in &consumers {
        b.broker.subscribe(c, &["topic.*"], &b.tokens[c]).map_err(|e| e.to_string())?;
    }
    let mut seqs: HashMap<&str, u64> = HashMap::new();
    let mut expected_q: HashMap<&str, usize> = HashMap::new();
    let mut out = FlowFuzz::default();
    let drain = |out: &mut FlowFuzz| -> Check {
        for c in &consumers {
            let batch = b.broker.poll(c, &BatchConfig::default(), &b.tokens[c]).map_err(|e| e.to_string())?;
            for e in batch {
                ensure!(b.sec.was_allowed(c, &e), "{c} received {:?} without a prior Allow", key_of(&e));
                let d = brute_decision(&e.label.source, &e.label.sink, c, &policies);
                ensure!(d == FlowDecision::Allow, "{c} received {:?} the oracle denies ({d:?})", key_of(&e));
                out.delivered += 1;
            }
        }
        Ok(())
    };
    for i in 0..n {
        let p = producers[rng.random_range(0..producers.len())].as_str();
        let t = topics[rng.random_range(0..topics.len())].as_str();
        let sink = ["*", "app.a", "app.b", "app.*", "other"][rng.random_range(0..5)];
        let seq = seqs.entry(p).or_insert(0);
        *seq += 1;
        let mut env = Envelope::new(Topic::new(t).unwrap(), p, *seq, i as u64, vec![0u8; 8]);
        // producers cannot forge the source: publish overwrites it
        env.label = Label { source: "topic.agg.f1".into(), sink: sink.into() };
        b.broker.publish(env, &b.tokens[p]).map_err(|e| e.to_string())?;
        for c in &consumers {
            if brute_decision(t, sink, c, &policies) != FlowDecision::Allow {
                *expected_q.entry(c.as_str()).or_insert(0) += 1;
            }
        }
        if rng.random_bool(0.05) {
            drain(&mut out)?;
        }
    }
    drain(&mut out)?;
    for c in &consumers {
        let logged = b.sec.quarantine().count_for(c);
        let stats = b.broker.consumer_stats(c).ok_or("missing stats")?;
        let want = expected_q.get(c.as_str()).copied().unwrap_or(0);
        ensure!(logged == want, "{c}: {logged} quarantine records, oracle expects {want}");
        ensure!(stats.quarantined as usize == want, "{c}: stats.quarantined {} != {want}", stats.quarantined);
        ensure!(stats.delivered as usize + want == n, "{c}: delivered + quarantined != published");
        out.quarantined += logged;
    }
    Ok(out)
}

/// Short pair scenario whose follower is warned, plus a small road run.
pub fn audit_scenarios() -> Vec<Scenario> {
    let mut pair = fcw_scenario1();
    pair.duration_s = 30.0;
    pair.tamper_every = Some(50);
    let road: Scenario = serde_json::from_str(
        r#"{"name":"audit-road","duration_s":5,"n_mobile":12,"n_fixed":2,"trace":{"kind":"road"},"seed":3,"tamper_every":40}"#,
    )
    .unwrap();
    vec![pair, road]
}

/// Every broker payload (decrypted), warehouse row, quarantine record,
/// notice and report must be free of raw vehicle ids. Returns the number
/// of artifacts inspected.
pub fn raw_id_audit(s: &Scenario) -> Check<usize> {
    let mut notices = Vec::new();
    let o = run_scenario_with(s, &RunOptions { audit: true, ..Default::default() }, &mut |e| {
        notices.push(serde_json::to_string(e).unwrap())
    })
    .map_err(|e| e.to_string())?;
    let ids: Vec<String> = o.schedule.vehicles.iter().map(|v| v.vehicle_id.clone()).collect();
    let key = run_link_key(s.seed);
    let mut texts = Vec::new();
    for t in o.broker.topics() {
        for e in o.broker.log(t.as_str()) {
            let plain = open_payload(&e, Some(&key)).map_err(|err| format!("cannot open {t} envelope: {err}"))?;
            texts.push(String::from_utf8_lossy(&plain).into_owned());
            texts.push(e.producer.clone());
        }
    }
    for table in cvdep::warehouse::Table::ALL {
        for row in o.warehouse.query(table.name(), 0, u64::MAX).map_err(|e| e.to_string())? {
            texts.push(row.to_string());
        }
    }
    texts.push(serde_json::to_string(&o.quarantine).unwrap());
    texts.push(serde_json::to_string(&o.report).unwrap());
    texts.extend(notices);
    for t in &texts {
        for id in &ids {
            ensure!(!t.contains(id.as_str()), "raw vehicle id {id} leaked: {}", &t[..t.len().min(200)]);
        }
    }
    ensure!(o.counters.raw_published > 0, "audit scenario published nothing");
    Ok(texts.len())
}

// ---------------------------------------------------------------- hetnet

const PRIORITY: [MediumKind; 4] = [MediumKind::Dsrc, MediumKind::Fiber, MediumKind::WiFi, MediumKind::Lte];

/// Reference selector: scan every medium in priority order and keep the
/// first one with strictly lower latency than the current pick.
pub fn brute_select(req: &AppRequirement, snap: &MetadataSnapshot) -> Option<(MediumKind, bool)> {
    let pick = |want_qualified: bool| {
        let mut best: Option<(MediumKind, f64)> = None;
        for kind in PRIORITY {
            let Some(s) = snap.media.get(&kind) else { continue };
            if !s.available {
                continue;
            }
            let lat = s.lat_avg_ms.unwrap_or(f64::INFINITY);
            if want_qualified && !(s.lat_avg_ms.is_some() && lat <= req.max_latency_ms && 1.0 - s.loss_rate >= req.min_reliability) {
                continue;
            }
            if best.is_none_or(|(_, b)| lat < b) {
                best = Some((kind, lat));
            }
        }
        best.map(|(k, _)| k)
    };
    pick(true).map(|k| (k, true)).or_else(|| pick(false).map(|k| (k, false)))
}

pub fn requirement_grid() -> Vec<AppRequirement> {
    let mut v = Vec::new();
    for lat in [5.0, 20.0, 50.0, 100.0, 200.0] {
        for rel in [0.9, 0.99] {
            v.push(AppRequirement::new(lat, rel).unwrap());
        }
    }
    v
}

fn stats_for(kind: MediumKind, available: bool, lat: Option<f64>, loss: f64) -> MediumStats {
    MediumStats {
        kind,
        lat_min_ms: lat.map(|l| l * 0.5),
        lat_avg_ms: lat,
        lat_max_ms: lat.map(|l| l * 2.0),
        loss_rate: loss,
        signal_strength_dbm: -60.0,
        available,
        sample_count: if lat.is_some() { 100 } else { 0 },
    }
}

/// Compares the library against the reference on all 15 non-empty subsets
/// of available media × the requirement grid, for `draws` random stat sets
/// (latencies from a small pool so ties occur, sometimes missing).
pub fn hetnet_exhaustive(draws: u64) -> Check<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e7);
    let grid = requirement_grid();
    let mut compared = 0;
    for _ in 0..draws {
        let lats: Vec<Option<f64>> = (0..4)
            .map(|_| if rng.random_bool(0.1) { None } else { Some([2.0, 10.0, 15.0, 40.0, 120.0, 300.0][rng.random_range(0..6)]) })
            .collect();
        let losses: Vec<f64> = (0..4).map(|_| [0.0, 0.005, 0.02, 0.2][rng.random_range(0..4)]).collect();
        for mask in 1u8..16 {
            let media = MediumKind::ALL
                .iter()
                .enumerate()
                .map(|(i, k)| (*k, stats_for(*k, mask & (1 << i) != 0, lats[i], losses[i])))
                .collect();
            let snap = MetadataSnapshot { snapshot_id: mask as u64, t_ms: 0, media };
            for req in &grid {
                let got = select_medium(req, &snap).map_err(|e| format!("mask {mask:04b}: {e}"))?;
                let want = brute_select(req, &snap).ok_or("reference found nothing")?;
                ensure!(
                    (got.medium, got.requirement_met) == want,
                    "mask {mask:04b} {req:?}: got {:?}/{}, want {want:?}",
                    got.medium,
                    got.requirement_met
                );
                ensure!(snap.media[&got.medium].available, "picked an unavailable medium");
                compared += 1;
            }
        }
    }
    let empty = MetadataSnapshot {
        snapshot_id: 0,
        t_ms: 0,
        media: MediumKind::ALL.iter().map(|k| (*k, stats_for(*k, false, Some(1.0), 0.0))).collect(),
    };
    ensure!(select_medium(&AppRequirement::safety(), &empty).is_err(), "no available media must be an error");
    Ok(compared)
}

/// Mean wall time of one selection over `calls` calls, in milliseconds.
pub fn hetnet_mean_decision_ms(calls: usize) -> f64 {
    let snap = MetadataSnapshot {
        snapshot_id: 1,
        t_ms: 0,
        media: MediumKind::ALL.iter().map(|k| (*k, stats_for(*k, true, Some(10.0 + k.priority() as f64), 0.01))).collect(),
    };
    let grid = requirement_grid();
    let start = Instant::now();
    for i in 0..calls {
        std::hint::black_box(select_medium(&grid[i % grid.len()], std::hint::black_box(&snap)).unwrap());
    }
    start.elapsed().as_secs_f64() * 1e3 / calls as f64
}

// ---------------------------------------------------------------- scenarios

pub const MPH: f64 = cvdep::model::MPH_TO_MPS;

/// Lead at 20 mph, follower at 30 mph, 100 m apart; the follower brakes to
/// 15 mph at 21 s.
pub fn fcw_scenario1() -> Scenario {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/fcw_scenario1.json")).unwrap();
    Scenario::from_json(&text, None).unwrap()
}

pub fn pair_spec(s: &Scenario) -> PairSpec {
    match &s.trace {
        TraceSpec::Pair(p) => p.clone(),
        other => panic!("not a pair trace: {other:?}"),
    }
}

/// First 100 ms tick at which the closed-form gap falls below the warning
/// distance, for constant speeds.
pub fn closed_form_first_tick(gap0: f64, v_lead: f64, v_follow: f64, a: f64, d: f64) -> (u64, f64, f64) {
    let closing = v_follow - v_lead;
    let threshold = closing * closing / (2.0 * a) + d;
    let mut k = 0u64;
    loop {
        let t = k as f64 * 0.1;
        let gap = gap0 - closing * t;
        if gap < threshold {
            return (k * 100, gap, threshold);
        }
        k += 1;
    }
}

/// Minimum gap over the pair trace, evaluated on a 1 ms grid from the
/// closed-form motion.
pub fn min_gap(spec: &PairSpec, duration_s: f64) -> f64 {
    use cvdep::harness::synth::braking_motion;
    let mut min = f64::INFINITY;
    let mut t = 0.0;
    while t <= duration_s {
        let (xl, _) = braking_motion(spec.initial_gap_m, spec.lead_speed_mps, spec.lead_brake, t);
        let (xf, _) = braking_motion(0.0, spec.follow_speed_mps, spec.follow_brake, t);
        min = min.min(xl - xf);
        t += 0.001;
    }
    min
}

pub fn run(s: &Scenario) -> RunOutcome {
    run_scenario_with(s, &RunOptions::default(), &mut |_| {}).unwrap()
}

pub fn road_template() -> Scenario {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/scalability_template.json")).unwrap();
    Scenario::from_json(&text, None).unwrap()
}

pub fn distribution_template() -> Scenario {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/distribution_template.json")).unwrap();
    Scenario::from_json(&text, None).unwrap()
}
