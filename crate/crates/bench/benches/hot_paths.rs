use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use cvdep::apps::{fcw_evaluate, find_preceding, FcwInput, FcwParams};
use cvdep::broker::BatchConfig;
use cvdep::harness::{run_scenario, Scenario};
use cvdep::hetnet::{select_medium, AppRequirement};
use cvdep::model::{Envelope, Topic};
use cvdep::security::{protect_envelope, unprotect, KeyMaterial, LinkKind, Role, SecurityContext};
use cvdep_bench::{broker_fixture, platoon, warm_monitor, CONSUMER, PRODUCER, TOPIC};

fn hetnet(c: &mut Criterion) {
    let mon = warm_monitor();
    let snap = mon.metadata();
    let req = AppRequirement::safety();
    c.bench_function("select_medium", |b| b.iter(|| select_medium(black_box(&req), black_box(&snap)).unwrap()));
    c.bench_function("monitor_record", |b| {
        let mut t = 0u64;
        b.iter(|| {
            t += 1;
            mon.record(cvdep::hetnet::MediumKind::Dsrc, 3.0, true, -60.0, t).unwrap()
        })
    });
}

fn broker(c: &mut Criterion) {
    let fx = broker_fixture();
    let topic = Topic::new(TOPIC).unwrap();
    let cfg = BatchConfig::new(64, 0).unwrap();
    let mut seq = 0u64;
    c.bench_function("broker_publish_poll_64", |b| {
        b.iter(|| {
            for _ in 0..64 {
                seq += 1;
                let env = Envelope::new(topic.clone(), PRODUCER, seq, 0, vec![0u8; 96]);
                fx.broker.publish(env, &fx.producer_token).unwrap();
            }
            let got = fx.broker.poll(CONSUMER, &cfg, &fx.consumer_token).unwrap();
            assert_eq!(got.len(), 64);
            got
        })
    });
}

fn security(c: &mut Criterion) {
    let sec = SecurityContext::new(3);
    let cred = sec.register_and_issue("f1", Role::FixedEdge, 0).unwrap();
    let verify = cred.certificate.verifying_key().unwrap();
    let keys = KeyMaterial::new(cred.signing_key.clone(), Some([7u8; 32]));
    let env = Envelope::new(Topic::new(TOPIC).unwrap(), "f1", 1, 0, vec![1u8; 96]);
    c.bench_function("protect_v2i", |b| {
        b.iter_batched(|| env.clone(), |e| protect_envelope(e, LinkKind::V2I, &keys).unwrap(), BatchSize::SmallInput)
    });
    let sealed = protect_envelope(env.clone(), LinkKind::V2I, &keys).unwrap();
    c.bench_function("unprotect_v2i", |b| b.iter(|| unprotect(black_box(&sealed), &verify, Some(&[7u8; 32])).unwrap()));
}

fn fcw(c: &mut Criterion) {
    let params = FcwParams::default();
    let input = FcwInput { v_o_mps: 6.0, v_t_mps: 13.4, gap_m: 15.0 };
    c.bench_function("fcw_evaluate", |b| b.iter(|| fcw_evaluate(black_box(&input), &params, 0).unwrap()));
    let cars = platoon(200);
    let (me, rest) = cars.split_first().unwrap();
    c.bench_function("find_preceding_200", |b| b.iter(|| find_preceding(black_box(me), black_box(rest)).map(|(_, d)| d)));
}

fn scenario(c: &mut Criterion) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/fcw_scenario2.json");
    let s = Scenario::from_file(&path).unwrap();
    let mut g = c.benchmark_group("scenario");
    g.sample_size(10);
    g.bench_function("fcw_scenario2_virtual", |b| b.iter(|| run_scenario(&s).unwrap()));
    g.finish();
}

criterion_group!(benches, hetnet, broker, security, fcw, scenario);
criterion_main!(benches);
