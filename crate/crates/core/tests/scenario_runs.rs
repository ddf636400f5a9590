mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use common::*;
use cvdep::apps::{fcw_threshold, FcwParams};
use cvdep::clock::ClockMode;
use cvdep::harness::{
    run_scenario, run_scenario_with, run_sweep, EngineEvent, MetricsReport, ReportFormat, RunOptions, SampleClass, Scenario,
    ScenarioError, CSV_HEADER,
};

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_to(s: &Scenario, dir: &Path, format: ReportFormat) {
    let opts = RunOptions { out_dir: Some(dir.to_path_buf()), format, ..Default::default() };
    run_scenario_with(s, &opts, &mut |_| {}).unwrap();
}

#[test]
fn fcw_pair_warns_at_the_closed_form_tick() {
    let s = fcw_scenario1();
    let spec = pair_spec(&s);
    let params = s.apps.fcw.unwrap();
    let (tick, gap, threshold) =
        closed_form_first_tick(spec.initial_gap_m, spec.lead_speed_mps, spec.follow_speed_mps, params.a_moderate_mps2, params.d_m);
    assert_eq!(tick, 20_600);
    assert!((threshold - 7.9803).abs() < 1e-4);

    let o = run(&s);
    let first = o.first_warning.expect("a warning is raised");
    assert_eq!(first.tick_ms, tick);
    assert!((first.gap_m - gap).abs() < 1e-6);
    assert!((first.d_w_m - threshold).abs() < 1e-9);
    assert!(first.gap_m > 0.0);
    assert!(min_gap(&spec, s.duration_s) > 0.0);
    let fcw = &o.report.classes[&SampleClass::Fcw];
    assert!(fcw.avg_ms < 200.0 && fcw.max_ms < 200.0, "{fcw:?}");
    assert!(o.report.pass.safety);
    // the uplink is lossy, so a warning can be dropped on its way out
    assert!(o.counters.warnings_delivered > 0 && o.counters.warnings_delivered <= o.counters.warnings_emitted);
}

#[test]
fn fcw_lead_stopping_scenario_warns_before_contact() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/fcw_scenario2.json")).unwrap();
    let s = Scenario::from_json(&text, None).unwrap();
    let o = run(&s);
    let first = o.first_warning.unwrap();
    // closed form: lead brakes at 10 s, follower at 11.5 s, both at 6 m/s²
    assert_eq!(first.tick_ms, 12_200);
    let tau = 2.2;
    let gap = 30.0 - 0.5 * 6.0 * tau * tau + 0.5 * 6.0 * (tau - 1.5) * (tau - 1.5);
    assert!((first.gap_m - gap).abs() < 1e-6, "{} vs {gap}", first.gap_m);
    let v_lead = 13.4112 - 6.0 * tau;
    let v_follow = 13.4112 - 6.0 * (tau - 1.5);
    assert!((first.d_w_m - fcw_threshold(v_lead, v_follow, &FcwParams::default())).abs() < 1e-9);
    assert!(min_gap(&pair_spec(&s), s.duration_s) > 0.0);
    assert!(o.report.pass.safety);
}

#[test]
fn pair_over_200_seconds_generates_4000_bsms() {
    let o = run(&fcw_scenario1());
    assert_eq!(o.counters.bsms_generated, 4000);
    assert_eq!(o.schedule.total_samples(), 4000);
    assert_eq!(o.report.bsms_generated, 4000);
}

#[test]
fn reruns_are_byte_identical() {
    for (s, fmt) in [(fcw_scenario1(), ReportFormat::Csv), (audit_scenarios().remove(1), ReportFormat::Json)] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_to(&s, a.path(), fmt);
        run_to(&s, b.path(), fmt);
        let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
        assert!(ta.contains_key(&format!("report.{}", fmt.extension())));
        assert!(ta.keys().any(|k| k.ends_with("bsm.ndjson")));
        assert_eq!(ta, tb, "{}", s.name);
    }
}

#[test]
fn different_seeds_differ() {
    let mut s = audit_scenarios().remove(1);
    let a = run(&s);
    s.seed += 1;
    let b = run(&s);
    assert_ne!(a.delivery, b.delivery);
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let s = audit_scenarios().remove(1);
    run_to(&s, dir.path(), ReportFormat::Json);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, run_scenario(&s).unwrap());
}

#[test]
fn live_stream_ends_on_the_report_counters() {
    let s = audit_scenarios().remove(0);
    let mut events = Vec::new();
    let o = run_scenario_with(&s, &RunOptions::default(), &mut |e| events.push(e.clone())).unwrap();
    let metrics: Vec<_> = events.iter().filter_map(|e| if let EngineEvent::Metrics(m) = e { Some(*m) } else { None }).collect();
    assert!(metrics.len() >= s.duration_s as usize);
    assert!(metrics.windows(2).all(|w| w[0].t_ms < w[1].t_ms && w[0].warnings <= w[1].warnings));
    let last = metrics.last().unwrap();
    assert_eq!(last.warnings, o.report.warnings_emitted);
    assert_eq!(last.quarantined, o.report.quarantined);
    let warnings = events.iter().filter(|e| matches!(e, EngineEvent::FcwWarning(_))).count() as u64;
    let quarantines = events.iter().filter(|e| matches!(e, EngineEvent::QuarantineRecord(_))).count() as u64;
    assert_eq!(warnings, o.counters.warnings_delivered);
    assert_eq!(quarantines, o.report.quarantined);
    assert!(quarantines > 0);
}

#[test]
fn latency_samples_never_precede_generation() {
    let o = run(&audit_scenarios().remove(0));
    assert!(o.delivery.iter().chain(&o.fcw).all(|s| s.t_done_ms >= s.t_gen_ms && s.latency_ms == s.t_done_ms - s.t_gen_ms));
}

#[test]
fn sweep_writes_one_pooled_row_per_count() {
    let mut t = road_template();
    t.duration_s = 3.0;
    let counts = [5, 10, 20, 30, 50, 100, 150, 200];
    let dir = tempfile::tempdir().unwrap();
    let r = run_sweep(&t, &counts, 1, 2, Some(dir.path())).unwrap();
    assert_eq!(r.pooled.len(), 8);
    assert_eq!(r.runs.len(), 16);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 9);
    assert_eq!(std::fs::read_dir(dir.path().join("runs")).unwrap().count(), 16);
    for (p, pair) in r.pooled.iter().zip(r.runs.chunks(2)) {
        let avg = (pair[0].throughput_mbps + pair[1].throughput_mbps) / 2.0;
        assert!((p.throughput_mbps - avg).abs() < 1e-12);
        assert_eq!(p.bsms_generated, pair[0].bsms_generated + pair[1].bsms_generated);
        let n = p.classes[&SampleClass::Delivery].samples;
        assert_eq!(n, pair[0].classes[&SampleClass::Delivery].samples + pair[1].classes[&SampleClass::Delivery].samples);
    }
}

#[test]
fn invalid_scenarios_fail_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut s = fcw_scenario1();
    s.n_mobile = 3;
    s.n_system = 2;
    let Err(err) = run_scenario_with(&s, &RunOptions { out_dir: Some(out.clone()), ..Default::default() }, &mut |_| {}) else {
        panic!("invalid scenario ran");
    };
    match err {
        ScenarioError::Invalid(v) => assert_eq!(v.len(), 2, "{v:?}"),
        e => panic!("{e}"),
    }
    assert!(!out.exists());

    let missing = Scenario::from_json(
        r#"{"name":"m","duration_s":5,"n_mobile":1,"n_fixed":1,"trace":{"kind":"file","path":"nope.csv"}}"#,
        Some(dir.path()),
    )
    .unwrap();
    assert!(matches!(run_scenario(&missing), Err(ScenarioError::Io { .. } | ScenarioError::Trace { .. })));
    assert!(Scenario::from_json(r#"{"name":"x","bogus":1}"#, None).is_err());
}

#[test]
fn file_trace_scenario_runs() {
    let s = Scenario::from_file(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/file_trace.json"))).unwrap();
    let o = run(&s);
    assert_eq!(o.schedule.vehicles.len(), 3);
    assert_eq!(o.counters.bsms_generated, 3 * 300);
    assert!(o.report.pass.mobility);
}

#[test]
fn stop_flag_ends_a_wall_clock_run_early() {
    let mut s = audit_scenarios().remove(1);
    s.duration_s = 60.0;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let started = std::time::Instant::now();
    let opts = RunOptions { stop: Some(stop), clock: Some(ClockMode::Wall), ..Default::default() };
    let o = run_scenario_with(&s, &opts, &mut |e| {
        if let EngineEvent::Metrics(m) = e {
            if m.t_ms >= 1000 {
                flag.store(true, std::sync::atomic::Ordering::Relaxed);
            }
        }
    })
    .unwrap();
    assert!(o.stopped);
    assert!(started.elapsed().as_secs_f64() < 5.0);
    assert!(o.counters.bsms_generated < 12 * 600);
}
