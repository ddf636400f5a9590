//! Runs a scenario end to end and produces its metrics report.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{throughput_mbps, LatencySample, MetricsReport, PassFlags, ReportFormat, Thresholds};
use super::scenario::{Scenario, ScenarioError, SYSTEM_EDGE_ID};
use crate::apps::WINDOW_MS;
use crate::broker::Broker;
use crate::clock::{Clock, ClockMode, VirtualClock};
use crate::edges::{default_manifests, default_policies, Counters, FirstWarning, Notice, Platform, Reception, Sim, SimConfig};
use crate::hetnet::{HetNetMonitor, MetadataSnapshot};
use crate::security::{QuarantineRecord, SecurityContext};
use crate::trace::BsmSchedule;
use crate::warehouse::Warehouse;

/// Extra simulated time after the last window closes, for in-flight data.
pub const DRAIN_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub t_ms: u64,
    pub latency_avg_ms: Option<f64>,
    pub latency_max_ms: Option<f64>,
    pub throughput_mbps: f64,
    pub warnings: u64,
    pub quarantined: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineEvent {
    Metrics(LiveMetrics),
    FcwWarning(crate::apps::FcwWarning),
    QuarantineRecord(QuarantineRecord),
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Where to write the report and warehouse; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub format: ReportFormat,
    pub stop: Option<Arc<AtomicBool>>,
    /// Record every fixed-edge reception for post-run audits.
    pub audit: bool,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Overrides the scenario clock.
    pub clock: Option<ClockMode>,
    /// Monitor to feed instead of a fresh one, so callers can watch it live.
    /// It should cover the scenario's configured media.
    pub hetnet: Option<Arc<HetNetMonitor>>,
}

pub struct RunOutcome {
    pub report: MetricsReport,
    pub delivery: Vec<LatencySample>,
    pub fcw: Vec<LatencySample>,
    pub counters: Counters,
    pub first_warning: Option<FirstWarning>,
    pub quarantine: Vec<QuarantineRecord>,
    pub hetnet: MetadataSnapshot,
    pub receptions: Vec<Reception>,
    pub warehouse: Arc<Warehouse>,
    pub broker: Arc<Broker>,
    pub security: Arc<SecurityContext>,
    pub schedule: BsmSchedule,
    pub stopped: bool,
}

/// Symmetric key shared by every infrastructure link in a run with `seed`.
pub fn run_link_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    ChaCha20Rng::seed_from_u64(seed ^ 0x11_4b_e7).fill_bytes(&mut key);
    key
}

/// Runs `s` in memory and returns its report.
pub fn run_scenario(s: &Scenario) -> Result<MetricsReport, ScenarioError> {
    Ok(run_scenario_with(s, &RunOptions::default(), &mut |_| {})?.report)
}

pub fn run_scenario_with(
    s: &Scenario,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&EngineEvent),
) -> Result<RunOutcome, ScenarioError> {
    let schedule = s.build_schedule()?;
    let seed = opts.seed.unwrap_or(s.seed);
    let clock_mode = opts.clock.unwrap_or(s.clock);

    let clock = Arc::new(VirtualClock::new(0));
    let security = Arc::new(SecurityContext::new(seed));
    let broker = Arc::new(Broker::new(clock.clone(), security.clone()));
    let hetnet = opts.hetnet.clone().unwrap_or_else(|| Arc::new(HetNetMonitor::new(&s.network.configured())));
    let warehouse = Arc::new(Warehouse::new());
    let platform = Platform { clock, security, broker, hetnet: hetnet.clone(), warehouse: warehouse.clone() };

    let sites = s.fixed_sites();
    let fixed_ids: Vec<&str> = sites.iter().map(|f| f.id.as_str()).collect();
    let mobile_ids: Vec<&str> = schedule.vehicles.iter().map(|v| v.vehicle_id.as_str()).collect();
    let policies = s.policies.clone().unwrap_or_else(default_policies);
    let manifests = s.manifests.clone().unwrap_or_else(|| default_manifests(&fixed_ids, SYSTEM_EDGE_ID, &mobile_ids));

    let gen_end_ms = s.duration_ms();
    let cfg = SimConfig {
        range_m: s.range_m,
        v2v_range_m: s.v2v_range_m,
        fcw: s.apps.fcw,
        traffic: s.apps.traffic,
        tamper_every: s.tamper_every,
        gen_end_ms,
        run_end_ms: gen_end_ms.div_ceil(WINDOW_MS) * WINDOW_MS + DRAIN_MS,
        system_id: SYSTEM_EDGE_ID.to_owned(),
        audit: opts.audit,
    };
    let link_key = run_link_key(seed);
    let mut sim = Sim::new(
        platform,
        s.network.clone(),
        seed,
        link_key,
        schedule.vehicles.clone(),
        sites,
        policies,
        manifests,
        cfg,
    )
    .map_err(|e| ScenarioError::Setup(e.to_string()))?;

    let started = Instant::now();
    let run_end = sim.config().run_end_ms;
    let mut next_tick = 1000;
    let mut stopped = false;
    while let Some(t) = sim.next_time() {
        if opts.stop.as_ref().is_some_and(|f| f.load(Ordering::Relaxed)) {
            stopped = true;
            break;
        }
        while t >= next_tick && next_tick < run_end {
            observer(&EngineEvent::Metrics(live(&sim, next_tick, s.duration_s)));
            next_tick += 1000;
        }
        if clock_mode == ClockMode::Wall {
            let due = Duration::from_millis(t);
            let elapsed = started.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
        sim.step();
        for n in sim.take_notices() {
            observer(&match n {
                Notice::FcwWarning(w) => EngineEvent::FcwWarning(w),
                Notice::QuarantineRecord(r) => EngineEvent::QuarantineRecord(r),
            });
        }
    }
    sim.finish();

    let quarantine = sim.quarantine_records();
    let mut report = MetricsReport {
        scenario: s.name.clone(),
        n_mobile: s.n_mobile,
        n_fixed: s.n_fixed,
        seed,
        duration_s: s.duration_s,
        bsms_generated: sim.counters.bsms_generated,
        classes: Default::default(),
        throughput_mbps: throughput_mbps(sim.delivered_bytes(), s.duration_s).unwrap_or(0.0),
        warnings_emitted: sim.counters.warnings_emitted,
        quarantined: quarantine.len() as u64,
        dropped_by_channel: sim.counters.dropped,
        thresholds: Thresholds::default(),
        pass: PassFlags { mobility: true, safety: true },
    };
    report.set_samples(&sim.delivery, &sim.fcw);
    let final_t = if stopped { sim.platform().clock.now_ms() } else { run_end };
    observer(&EngineEvent::Metrics(live(&sim, final_t, s.duration_s)));

    if let Some(dir) = &opts.out_dir {
        write_outputs(dir, &report, opts.format, &warehouse)?;
    }
    Ok(RunOutcome {
        report,
        delivery: std::mem::take(&mut sim.delivery),
        fcw: std::mem::take(&mut sim.fcw),
        counters: sim.counters,
        first_warning: sim.first_warning,
        quarantine,
        hetnet: (*hetnet.metadata()).clone(),
        receptions: std::mem::take(&mut sim.receptions),
        warehouse,
        broker: sim.platform().broker.clone(),
        security: sim.platform().security.clone(),
        schedule,
        stopped,
    })
}

fn live(sim: &Sim, t_ms: u64, duration_s: f64) -> LiveMetrics {
    let n = sim.delivery.len();
    let elapsed_s = (t_ms as f64 / 1000.0).min(duration_s);
    LiveMetrics {
        t_ms,
        latency_avg_ms: (n > 0).then(|| sim.delivery.iter().map(|s| s.latency_ms as f64).sum::<f64>() / n as f64),
        latency_max_ms: sim.delivery.iter().map(|s| s.latency_ms).max().map(|m| m as f64),
        throughput_mbps: throughput_mbps(sim.delivered_bytes(), elapsed_s).unwrap_or(0.0),
        warnings: sim.counters.warnings_emitted,
        quarantined: sim.platform().security.quarantine().len() as u64,
    }
}

fn write_outputs(dir: &std::path::Path, report: &MetricsReport, format: ReportFormat, wh: &Warehouse) -> Result<(), ScenarioError> {
    let out = |e: &dyn std::fmt::Display| ScenarioError::Output(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(|e| out(&e))?;
    let rendered = format.render(report).map_err(|e| out(&e))?;
    std::fs::write(dir.join(format!("report.{}", format.extension())), rendered).map_err(|e| out(&e))?;
    wh.persist(dir).map_err(|e| out(&e))?;
    Ok(())
}
