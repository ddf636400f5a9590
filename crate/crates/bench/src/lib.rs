//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use cvdep::broker::Broker;
use cvdep::clock::VirtualClock;
use cvdep::hetnet::{HetNetMonitor, MediumKind};
use cvdep::model::{Bsm, MsgId, Position};
use cvdep::security::{AccessManifest, FlowPolicy, Role, SecurityContext};

pub const TOPIC: &str = "bsm.raw.f1";
pub const PRODUCER: &str = "f1";
pub const CONSUMER: &str = "subapp1.f1";

/// Broker with one producer and one subscribed consumer on [`TOPIC`].
pub struct BrokerFixture {
    pub broker: Broker,
    pub producer_token: String,
    pub consumer_token: String,
}

pub fn broker_fixture() -> BrokerFixture {
    let clock = Arc::new(VirtualClock::new(0));
    let sec = Arc::new(SecurityContext::new(1));
    sec.set_policies(vec![FlowPolicy::allow("bsm.raw.*", "subapp1.*").unwrap()]).unwrap();
    let mut tokens = Vec::new();
    for (id, role, w, r) in [(PRODUCER, Role::FixedEdge, TOPIC, ""), (CONSUMER, Role::Application, "", TOPIC)] {
        let manifest = AccessManifest {
            subject: id.into(),
            writable_topics: [w].iter().filter(|s| !s.is_empty()).map(|s| s.to_string()).collect(),
            readable_topics: [r].iter().filter(|s| !s.is_empty()).map(|s| s.to_string()).collect(),
            services: vec![],
        };
        sec.declare_manifest(manifest).unwrap();
        let cred = sec.register_and_issue(id, role, 0).unwrap();
        tokens.push(sec.authenticate(&cred.certificate, 0).unwrap().token);
    }
    sec.seal_manifests();
    let broker = Broker::new(clock, sec).with_retention(1 << 16);
    broker.create_topic(TOPIC).unwrap();
    broker.subscribe(CONSUMER, &[TOPIC], &tokens[1]).unwrap();
    let consumer_token = tokens.pop().unwrap();
    BrokerFixture { broker, producer_token: tokens.pop().unwrap(), consumer_token }
}

/// Monitor over every medium with a full window of samples.
pub fn warm_monitor() -> HetNetMonitor {
    let mon = HetNetMonitor::new(&MediumKind::ALL);
    for i in 0..512u64 {
        for (k, kind) in MediumKind::ALL.into_iter().enumerate() {
            let lat = 2.0 + k as f64 * 10.0 + (i % 7) as f64;
            mon.record(kind, lat, i % 50 != 0, -60.0 - k as f64, i).unwrap();
        }
    }
    mon
}

/// `n` eastbound vehicles 25 m apart on one lane, ego first.
pub fn platoon(n: usize) -> Vec<Bsm> {
    (0..n)
        .map(|i| Bsm {
            msg_id: MsgId(i as u64),
            vehicle_id: format!("veh-{i}"),
            t_generated_ms: 0,
            pos: Position { x_m: 25.0 * i as f64, y_m: 0.0 },
            speed_mps: 20.0 - (i % 5) as f64,
            heading_deg: 90.0,
            accel_mps2: 0.0,
            brake_active: false,
        })
        .collect()
}
