//! HTTP/JSON control API with a server-sent event stream per scenario.
//!
//! Developers log in with a subject and secret listed in the manifests file
//! and receive a bearer token. Scenarios move Created → Running →
//! {Stopped, Finished}; each run executes on its own thread and fans its
//! events out to any number of stream subscribers.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cvdep::clock::{Clock, WallClock};
use cvdep::edges::default_policies;
use cvdep::harness::{reports_csv, run_scenario_with, EngineEvent, LiveMetrics, MetricsReport, RunOptions, Scenario};
use cvdep::hetnet::{HetNetMonitor, MediumKind, MetadataSnapshot};
use cvdep::model::Position;
use cvdep::security::{pseudonym, AccessManifest, FlowPolicy, QuarantineRecord, Role, ScrubSalt, SecurityContext, Service};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::broadcast;

const STREAM_CAPACITY: usize = 4096;

/// BSM fields every mobile edge reports.
pub const SENSORS: [&str; 5] = ["position", "speed", "heading", "acceleration", "brake"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

/// Manifest entry of a principal allowed to log in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Principal {
    #[serde(flatten)]
    pub manifest: AccessManifest,
    /// Hex SHA-256 of the login secret.
    pub secret_sha256: String,
}

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    /// Flow policies applied to scenarios that declare none.
    pub policies: Vec<FlowPolicy>,
    pub principals: Vec<Principal>,
}

impl GatewayConfig {
    pub fn load(policies: &Path, manifests: &Path) -> Result<Self, ConfigError> {
        let cfg = Self { policies: read_json(policies)?, principals: Self::load_principals(manifests)? };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_principals(manifests: &Path) -> Result<Vec<Principal>, ConfigError> {
        read_json(manifests)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in &self.policies {
            p.validate().map_err(|e| ConfigError::Invalid(format!("policy {p:?}: {e}")))?;
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.principals {
            p.manifest.validate().map_err(|e| ConfigError::Invalid(format!("manifest {}: {e}", p.manifest.subject)))?;
            let ok = p.secret_sha256.len() == 64 && p.secret_sha256.bytes().all(|b| b.is_ascii_hexdigit());
            if !ok {
                return Err(ConfigError::Invalid(format!("{}: secret_sha256 must be 64 hex digits", p.manifest.subject)));
            }
            if !seen.insert(&p.manifest.subject) {
                return Err(ConfigError::Invalid(format!("duplicate principal {}", p.manifest.subject)));
            }
        }
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.display().to_string(), source })
}

pub fn sha256_hex(secret: &str) -> String {
    hex::encode(Sha256::digest(secret.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioState {
    Created,
    Running,
    Stopped,
    Finished,
}

impl ScenarioState {
    fn is_terminal(self) -> bool {
        matches!(self, Self::Stopped | Self::Finished)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub unix_ms: u64,
    pub subject: String,
    pub action: String,
    pub scenario: Option<String>,
    pub from: Option<ScenarioState>,
    pub to: Option<ScenarioState>,
}

/// One SSE message: the event name and its JSON payload.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub event: &'static str,
    pub data: String,
}

struct RunState {
    state: ScenarioState,
    history: Vec<StreamItem>,
    live: Option<LiveMetrics>,
    report: Option<MetricsReport>,
    quarantine: Vec<QuarantineRecord>,
    error: Option<String>,
}

struct Entry {
    id: String,
    owner: String,
    scenario: Scenario,
    hetnet: Arc<HetNetMonitor>,
    stop: Arc<AtomicBool>,
    tx: broadcast::Sender<StreamItem>,
    run: Mutex<RunState>,
}

impl Entry {
    fn lock(&self) -> MutexGuard<'_, RunState> {
        self.run.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Records and broadcasts under the lock so subscribers that copy the
    /// history and then listen never miss or repeat an item.
    fn emit(&self, run: &mut RunState, item: StreamItem) {
        run.history.push(item.clone());
        let _ = self.tx.send(item);
    }
}

pub struct Gateway {
    clock: WallClock,
    security: SecurityContext,
    principals: HashMap<String, Principal>,
    policies: Vec<FlowPolicy>,
    scenarios: Mutex<BTreeMap<u64, Arc<Entry>>>,
    next_id: AtomicU64,
    audit: Mutex<Vec<AuditEntry>>,
    last_started: Mutex<Option<Arc<HetNetMonitor>>>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Self {
        Self {
            clock: WallClock::new(),
            security: SecurityContext::new(rand::random()),
            principals: cfg.principals.into_iter().map(|p| (p.manifest.subject.clone(), p)).collect(),
            policies: cfg.policies,
            scenarios: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            audit: Mutex::new(Vec::new()),
            last_started: Mutex::new(None),
        }
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        lock(&self.audit).clone()
    }

    fn record(&self, subject: &str, action: &str, scenario: Option<&str>, from: Option<ScenarioState>, to: Option<ScenarioState>) {
        lock(&self.audit).push(AuditEntry {
            unix_ms: unix_ms(),
            subject: subject.to_owned(),
            action: action.to_owned(),
            scenario: scenario.map(str::to_owned),
            from,
            to,
        });
    }

    fn login(&self, subject: &str, secret: &str) -> ApiResult<Value> {
        let p = self.principals.get(subject).ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unknown credential"))?;
        if !p.secret_sha256.eq_ignore_ascii_case(&sha256_hex(secret)) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unknown credential"));
        }
        let now = self.clock.now_ms();
        let refused = |e: cvdep::security::SecurityError| ApiError::new(StatusCode::UNAUTHORIZED, e.to_string());
        let cred = self.security.register_and_issue(subject, Role::Developer, now).map_err(refused)?;
        let tok = self.security.authenticate(&cred.certificate, now).map_err(refused)?;
        self.record(subject, "login", None, None, None);
        Ok(json!({ "token": tok.token, "subject": tok.subject, "expires_in_ms": tok.expires_ms.saturating_sub(now) }))
    }

    /// Subject of the bearer token in the header or, for event streams,
    /// the `token` query parameter.
    fn authenticate(&self, headers: &HeaderMap, query_token: Option<&str>) -> ApiResult<String> {
        let header_token =
            headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
        let token = header_token.or(query_token).ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing token"))?;
        self.security
            .validate_token(token.trim(), self.clock.now_ms())
            .map(|t| t.subject)
            .map_err(|e| ApiError::new(StatusCode::UNAUTHORIZED, e.to_string()))
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Entry>> {
        let key: u64 = id.parse().map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("no scenario {id}")))?;
        lock(&self.scenarios).get(&key).cloned().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no scenario {id}")))
    }

    /// Validates and registers a scenario; errors are listed one per problem.
    fn create(&self, subject: &str, body: Value) -> Result<Value, Vec<String>> {
        let mut scenario: Scenario = serde_json::from_value(body).map_err(|e| vec![e.to_string()])?;
        if scenario.policies.is_none() && !self.policies.is_empty() {
            scenario.policies = Some(self.policies.clone());
        }
        match scenario.build_schedule() {
            Ok(_) => {}
            Err(cvdep::harness::ScenarioError::Invalid(v)) => return Err(v),
            Err(other) => return Err(vec![other.to_string()]),
        }
        let key = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = key.to_string();
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        let entry = Arc::new(Entry {
            id: id.clone(),
            owner: subject.to_owned(),
            hetnet: Arc::new(HetNetMonitor::new(&scenario.network.configured())),
            scenario,
            stop: Arc::new(AtomicBool::new(false)),
            tx,
            run: Mutex::new(RunState {
                state: ScenarioState::Created,
                history: Vec::new(),
                live: None,
                report: None,
                quarantine: Vec::new(),
                error: None,
            }),
        });
        lock(&self.scenarios).insert(key, entry.clone());
        self.record(subject, "create", Some(&id), None, Some(ScenarioState::Created));
        let body = handle_json(&entry, &entry.lock());
        Ok(body)
    }

    fn start(self: &Arc<Self>, subject: &str, id: &str) -> ApiResult<Value> {
        let entry = self.entry(id)?;
        let mut run = entry.lock();
        if run.state != ScenarioState::Created {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("cannot start a {:?} scenario", run.state)));
        }
        run.state = ScenarioState::Running;
        self.record(subject, "start", Some(id), Some(ScenarioState::Created), Some(ScenarioState::Running));
        entry.emit(&mut run, state_item(ScenarioState::Running));
        *lock(&self.last_started) = Some(entry.hetnet.clone());
        let body = handle_json(&entry, &run);
        drop(run);
        let gw = self.clone();
        let worker = entry.clone();
        std::thread::Builder::new()
            .name(format!("scenario-{id}"))
            .spawn(move || gw.execute(&worker))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(body)
    }

    fn execute(&self, entry: &Entry) {
        let opts = RunOptions { stop: Some(entry.stop.clone()), hetnet: Some(entry.hetnet.clone()), ..Default::default() };
        let result = run_scenario_with(&entry.scenario, &opts, &mut |ev| {
            let mut run = entry.lock();
            let item = match ev {
                EngineEvent::Metrics(m) => {
                    run.live = Some(*m);
                    StreamItem { event: "metrics", data: to_json(m) }
                }
                EngineEvent::FcwWarning(w) => StreamItem { event: "fcw_warning", data: to_json(w) },
                EngineEvent::QuarantineRecord(r) => {
                    run.quarantine.push(r.clone());
                    StreamItem { event: "quarantine_record", data: to_json(r) }
                }
            };
            entry.emit(&mut run, item);
        });
        let mut run = entry.lock();
        match result {
            Ok(outcome) => {
                run.quarantine = outcome.quarantine;
                run.report = Some(outcome.report);
            }
            Err(e) => {
                log::error!("scenario {}: {e}", entry.id);
                run.error = Some(e.to_string());
            }
        }
        if run.state == ScenarioState::Running {
            run.state = ScenarioState::Finished;
            self.record(&entry.owner, "finish", Some(&entry.id), Some(ScenarioState::Running), Some(ScenarioState::Finished));
        }
        let final_state = run.state;
        entry.emit(&mut run, state_item(final_state));
    }

    fn stop(&self, subject: &str, id: &str) -> ApiResult<Value> {
        let entry = self.entry(id)?;
        let mut run = entry.lock();
        if run.state != ScenarioState::Running {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("cannot stop a {:?} scenario", run.state)));
        }
        run.state = ScenarioState::Stopped;
        entry.stop.store(true, Ordering::Relaxed);
        self.record(subject, "stop", Some(id), Some(ScenarioState::Running), Some(ScenarioState::Stopped));
        Ok(handle_json(&entry, &run))
    }

    fn topology(&self, subject: &str) -> Value {
        let services: Vec<Service> = self.principals.get(subject).map(|p| p.manifest.services.clone()).unwrap_or_default();
        let scenarios: Vec<Value> = lock(&self.scenarios)
            .values()
            .map(|e| {
                let s = &e.scenario;
                let salt = ScrubSalt::from_seed(s.seed);
                let mobiles: Vec<String> = s
                    .build_schedule()
                    .map(|b| b.vehicles.iter().map(|v| pseudonym(&v.vehicle_id, &salt)).collect())
                    .unwrap_or_default();
                let fixed: Vec<Value> =
                    s.fixed_sites().iter().map(|f| json!({ "id": f.id, "pos": pos_json(f.pos), "range_m": s.range_m })).collect();
                json!({
                    "scenario": e.id,
                    "name": s.name,
                    "fixed_edges": fixed,
                    "system_edges": [cvdep::harness::SYSTEM_EDGE_ID],
                    "mobile_edges": mobiles,
                    "media": s.network.configured(),
                })
            })
            .collect();
        json!({ "subject": subject, "services": services, "sensors": SENSORS, "scenarios": scenarios })
    }

    fn hetnet_snapshot(&self) -> MetadataSnapshot {
        let mon = lock(&self.last_started).clone();
        let mon = mon.unwrap_or_else(|| Arc::new(HetNetMonitor::new(&MediumKind::ALL)));
        (*mon.metadata()).clone()
    }
}

fn pos_json(p: Position) -> Value {
    json!({ "x_m": p.x_m, "y_m": p.y_m })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("event encodes")
}

fn state_item(s: ScenarioState) -> StreamItem {
    StreamItem { event: "state", data: to_json(&json!({ "state": s })) }
}

fn handle_json(e: &Entry, run: &RunState) -> Value {
    json!({
        "id": e.id,
        "name": e.scenario.name,
        "owner": e.owner,
        "state": run.state,
        "error": run.error,
    })
}

#[derive(Debug, Deserialize)]
struct Credential {
    subject: String,
    secret: String,
}

#[derive(Debug, Deserialize)]
struct LoginBody {
    credential: Credential,
}

#[derive(Debug, Default, Deserialize)]
struct TokenQuery {
    token: Option<String>,
    format: Option<String>,
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/v1/session", post(session))
        .route("/api/v1/topology", get(topology))
        .route("/api/v1/scenarios", post(create).get(list))
        .route("/api/v1/scenarios/{id}", get(show))
        .route("/api/v1/scenarios/{id}/start", post(start))
        .route("/api/v1/scenarios/{id}/stop", post(stop))
        .route("/api/v1/scenarios/{id}/metrics", get(metrics))
        .route("/api/v1/scenarios/{id}/stream", get(stream_events))
        .route("/api/v1/scenarios/{id}/quarantine", get(quarantine))
        .route("/api/v1/hetnet", get(hetnet))
        .route("/api/v1/audit", get(audit))
        .with_state(gw)
}

async fn session(State(gw): State<Arc<Gateway>>, body: Result<Json<LoginBody>, axum::extract::rejection::JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::UNAUTHORIZED, e.body_text()))?;
    gw.login(&body.credential.subject, &body.credential.secret).map(Json)
}

async fn topology(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    let subject = gw.authenticate(&headers, None)?;
    Ok(Json(gw.topology(&subject)))
}

async fn create(State(gw): State<Arc<Gateway>>, headers: HeaderMap, body: Result<Json<Value>, axum::extract::rejection::JsonRejection>) -> Response {
    let subject = match gw.authenticate(&headers, None) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let body = match body {
        Ok(Json(v)) => v,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({ "errors": [e.body_text()] }))).into_response(),
    };
    match gw.create(&subject, body) {
        Ok(v) => (StatusCode::CREATED, Json(v)).into_response(),
        Err(errors) => (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response(),
    }
}

async fn list(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    gw.authenticate(&headers, None)?;
    let entries: Vec<Arc<Entry>> = lock(&gw.scenarios).values().cloned().collect();
    Ok(Json(Value::Array(entries.iter().map(|e| handle_json(e, &e.lock())).collect())))
}

async fn show(State(gw): State<Arc<Gateway>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    gw.authenticate(&headers, None)?;
    let e = gw.entry(&id)?;
    let v = handle_json(&e, &e.lock());
    Ok(Json(v))
}

async fn start(State(gw): State<Arc<Gateway>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let subject = gw.authenticate(&headers, None)?;
    gw.start(&subject, &id).map(Json)
}

async fn stop(State(gw): State<Arc<Gateway>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let subject = gw.authenticate(&headers, None)?;
    gw.stop(&subject, &id).map(Json)
}

/// JSON snapshot of the run, or the final report as CSV with `?format=csv`.
async fn metrics(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<TokenQuery>,
) -> ApiResult<Response> {
    gw.authenticate(&headers, q.token.as_deref())?;
    let e = gw.entry(&id)?;
    let run = e.lock();
    match q.format.as_deref() {
        Some("csv") => {
            let report = run.report.as_ref().ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no final report yet"))?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], reports_csv(std::slice::from_ref(report))).into_response())
        }
        None | Some("json") => {
            Ok(Json(json!({ "id": e.id, "state": run.state, "live": run.live, "report": run.report })).into_response())
        }
        Some(other) => Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown format {other}"))),
    }
}

async fn quarantine(State(gw): State<Arc<Gateway>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<QuarantineRecord>>> {
    gw.authenticate(&headers, None)?;
    let e = gw.entry(&id)?;
    let records = e.lock().quarantine.clone();
    Ok(Json(records))
}

async fn hetnet(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult<Json<MetadataSnapshot>> {
    gw.authenticate(&headers, None)?;
    Ok(Json(gw.hetnet_snapshot()))
}

async fn audit(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult<Json<Vec<AuditEntry>>> {
    gw.authenticate(&headers, None)?;
    Ok(Json(gw.audit_log()))
}

/// Replays the run so far, then follows it live until it stops or finishes.
async fn stream_events(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<TokenQuery>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    gw.authenticate(&headers, q.token.as_deref())?;
    let e = gw.entry(&id)?;
    let (history, rx, done) = {
        let run = e.lock();
        let done = run.history.last().is_some_and(|i| i.event == "state" && is_terminal_item(i));
        (run.history.clone(), e.tx.subscribe(), done)
    };
    let live = stream::unfold((rx, done), |(mut rx, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(item) => {
                    let end = item.event == "state" && is_terminal_item(&item);
                    return Some((item, (rx, end)));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("stream subscriber skipped {n} events"),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let events = stream::iter(history).chain(live).map(|i| Ok(Event::default().event(i.event).data(i.data)));
    Ok(Sse::new(events).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

fn is_terminal_item(item: &StreamItem) -> bool {
    serde_json::from_str::<Value>(&item.data)
        .ok()
        .and_then(|v| serde_json::from_value::<ScenarioState>(v["state"].clone()).ok())
        .is_some_and(ScenarioState::is_terminal)
}

/// Policies used when `serve` gets no policy file.
pub fn fallback_policies() -> Vec<FlowPolicy> {
    default_policies()
}
