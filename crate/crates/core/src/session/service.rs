//! HTTP and WebSocket front end for live sessions.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | GET | `/api/health` | `{"protocol":1,"log_format":1}` |
//! | GET | `/api/maps` | map summaries |
//! | GET | `/api/maps/{id}` | the map document as JSON |
//! | POST | `/api/sessions` | [`CreateSession`] → [`Created`] |
//! | POST | `/api/sessions/{id}/events` | [`ClientMessage`] → server messages |
//! | GET | `/api/sessions/{id}/messages?after=N` | server messages with `seq > N` |
//! | GET | `/api/sessions/{id}/ws` | WebSocket: client messages in, server messages out |
//! | GET | `/api/sessions/{id}/log` | the NDJSON log |
//!
//! Anything else is served from the static directory, if one is configured.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use super::protocol::{write_log, ClientMessage, ServerEnvelope, ServerMessage, LOG_FORMAT_VERSION, PROTOCOL_VERSION};
use super::{AgentProfile, AgentSettings, GuidanceSpec, LogRecord, Session};
use crate::belief::{Policy, PolicyError};
use crate::dialogue::{AgentKind, Templates};
use crate::planning::Cost;
use crate::domain::{MapSpec, TaskModel};

/// Milliseconds since some fixed origin. Timers only look at differences.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> SystemClock {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// A clock that only moves when told to.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> ManualClock {
        ManualClock(AtomicU64::new(start))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct CreateSession {
    /// Chosen by the server when absent.
    #[serde(default)]
    pub id: Option<String>,
    pub map: String,
    /// The service default when absent.
    #[serde(flatten)]
    pub settings: Option<AgentSettings>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Created {
    pub session: String,
    pub protocol: u32,
    pub messages: Vec<ServerEnvelope>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapSummary {
    pub id: String,
    pub landmarks: usize,
    pub bikes: usize,
}

struct Slot {
    session: Session,
    sent: Vec<ServerEnvelope>,
    flushed: usize,
    stream: broadcast::Sender<ServerEnvelope>,
}

impl Slot {
    fn publish(&mut self, out: Vec<ServerEnvelope>, sink: Option<&PathBuf>) -> std::io::Result<()> {
        for m in &out {
            let _ = self.stream.send(m.clone());
        }
        self.sent.extend(out);
        if let Some(dir) = sink {
            let new = &self.session.log()[self.flushed..];
            if !new.is_empty() {
                let mut f = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(format!("{}.ndjson", self.session.id())))?;
                f.write_all(write_log(new).as_bytes())?;
                self.flushed = self.session.log().len();
            }
        }
        Ok(())
    }
}

pub struct ServiceConfig {
    pub maps: BTreeMap<String, MapSpec>,
    /// Agent for create requests that name none.
    pub default_settings: AgentSettings,
    pub templates: Templates,
    pub log_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub tick_interval: Duration,
    /// Precomputed policies by (map, agent name, budget).
    pub policies: HashMap<(String, String, usize), Arc<Policy>>,
}

impl ServiceConfig {
    pub fn new(maps: BTreeMap<String, MapSpec>) -> ServiceConfig {
        ServiceConfig {
            maps,
            default_settings: AgentSettings::new(AgentKind::Predictive { delta: Cost::units(1) }),
            templates: Templates::default(),
            log_dir: None,
            static_dir: None,
            tick_interval: Duration::from_millis(50),
            policies: HashMap::new(),
        }
    }

    /// Loads every `*.ndjson` policy file in `dir`. Each must belong to one
    /// of the configured maps.
    pub fn load_policies(&mut self, dir: &std::path::Path) -> Result<usize, String> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| format!("{}: {e}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "ndjson"))
            .collect();
        paths.sort();
        for path in &paths {
            let fail = |e: PolicyError| format!("{}: {e}", path.display());
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let header = Policy::header(&text).map_err(fail)?;
            let map = self.maps.get(&header.map).ok_or_else(|| format!("{}: unknown map `{}`", path.display(), header.map))?;
            let policy = Policy::from_ndjson(&TaskModel::compile(map), &text).map_err(fail)?;
            self.policies.insert((header.map, header.agent, header.budget), Arc::new(policy));
        }
        Ok(paths.len())
    }
}

/// Shared service state. Each session sits behind its own lock so messages
/// for one session are handled in order while sessions run in parallel.
pub struct AppState {
    maps: BTreeMap<String, MapSpec>,
    tasks: Mutex<HashMap<String, Arc<TaskModel>>>,
    profiles: Mutex<HashMap<(String, String), Arc<AgentProfile>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    templates: Arc<Templates>,
    policies: HashMap<(String, String, usize), Arc<Policy>>,
    default_settings: AgentSettings,
    clock: Arc<dyn Clock>,
    log_dir: Option<PathBuf>,
    next_id: AtomicU64,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

impl AppState {
    pub fn new(config: &ServiceConfig, clock: Arc<dyn Clock>) -> AppState {
        AppState {
            maps: config.maps.clone(),
            tasks: Mutex::default(),
            profiles: Mutex::default(),
            sessions: Mutex::default(),
            templates: Arc::new(config.templates.clone()),
            policies: config.policies.clone(),
            default_settings: config.default_settings.clone(),
            clock,
            log_dir: config.log_dir.clone(),
            next_id: AtomicU64::new(1),
        }
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| not_found("session", id))
    }

    fn profile(&self, map: &str, settings: &AgentSettings) -> Result<Arc<AgentProfile>, ApiError> {
        let spec = self.maps.get(map).ok_or_else(|| not_found("map", map))?;
        let key = (map.to_string(), serde_json::to_string(settings).expect("settings serialize"));
        if let Some(p) = self.profiles.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let task = self
            .tasks
            .lock()
            .unwrap()
            .entry(map.to_string())
            .or_insert_with(|| Arc::new(TaskModel::compile(spec)))
            .clone();
        let preset = match settings.guidance {
            GuidanceSpec::Policy { budget } => self.policies.get(&(map.to_string(), settings.agent.name(), budget)),
            GuidanceSpec::Planner => None,
        };
        let profile = match preset {
            Some(p) => AgentProfile::with_policy(task, settings.clone(), self.templates.clone(), p.clone()),
            None => AgentProfile::new(task, settings.clone(), self.templates.clone()),
        };
        let profile = profile
            .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let profile = Arc::new(profile);
        self.profiles.lock().unwrap().insert(key, profile.clone());
        Ok(profile)
    }

    pub fn create(&self, req: CreateSession) -> Result<Created, ApiError> {
        let settings = req.settings.unwrap_or_else(|| self.default_settings.clone());
        let profile = self.profile(&req.map, &settings)?;
        let id = req.id.unwrap_or_else(|| format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst)));
        let mut sessions = self.sessions.lock().unwrap();
        if sessions.contains_key(&id) {
            return Err(ApiError(StatusCode::CONFLICT, format!("session `{id}` already exists")));
        }
        let document = self.maps[&req.map].to_toml();
        let (session, out) = Session::start(&id, profile, Some(document), self.clock.now_ms())
            .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let (stream, _) = broadcast::channel(256);
        let mut slot = Slot { session, sent: Vec::new(), flushed: 0, stream };
        slot.publish(out.clone(), self.log_dir.as_ref()).map_err(io_error)?;
        sessions.insert(id.clone(), Arc::new(Mutex::new(slot)));
        Ok(Created { session: id, protocol: PROTOCOL_VERSION, messages: out })
    }

    pub fn submit(&self, id: &str, msg: ClientMessage) -> Result<Vec<ServerEnvelope>, ApiError> {
        let slot = self.slot(id)?;
        let mut slot = slot.lock().unwrap();
        let out = slot.session.handle(msg, self.clock.now_ms());
        slot.publish(out.clone(), self.log_dir.as_ref()).map_err(io_error)?;
        Ok(out)
    }

    /// Fires due timers in every live session.
    pub fn tick_all(&self) {
        let now = self.clock.now_ms();
        let slots: Vec<_> = self.sessions.lock().unwrap().values().cloned().collect();
        for slot in slots {
            let mut slot = slot.lock().unwrap();
            if slot.session.deadline().is_some_and(|d| d <= now) {
                let out = slot.session.tick(now);
                if let Err(e) = slot.publish(out, self.log_dir.as_ref()) {
                    eprintln!("warning: could not append to the log of {}: {e}", slot.session.id());
                }
            }
        }
    }

    pub fn messages_after(&self, id: &str, after: u64) -> Result<Vec<ServerEnvelope>, ApiError> {
        let slot = self.slot(id)?;
        let slot = slot.lock().unwrap();
        Ok(slot.sent.iter().filter(|m| m.seq > after).cloned().collect())
    }

    pub fn log(&self, id: &str) -> Result<Vec<LogRecord>, ApiError> {
        Ok(self.slot(id)?.lock().unwrap().session.log().to_vec())
    }
}

fn io_error(e: std::io::Error) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("log sink: {e}"))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "protocol": PROTOCOL_VERSION, "log_format": LOG_FORMAT_VERSION }))
}

async fn list_maps(State(app): State<Arc<AppState>>) -> Json<Vec<MapSummary>> {
    Json(
        app.maps
            .iter()
            .map(|(id, m)| MapSummary { id: id.clone(), landmarks: m.landmarks.len(), bikes: m.bikes.len() })
            .collect(),
    )
}

async fn get_map(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<MapSpec>, ApiError> {
    app.maps.get(&id).cloned().map(Json).ok_or_else(|| not_found("map", &id))
}

async fn create(State(app): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Result<Json<Created>, ApiError> {
    // policy construction can take a while on big maps
    tokio::task::spawn_blocking(move || app.create(req))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
}

async fn submit(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<Vec<ServerEnvelope>>, ApiError> {
    match serde_json::from_str::<ClientMessage>(&body) {
        Ok(msg) => app.submit(&id, msg).map(Json),
        Err(e) => {
            app.slot(&id)?;
            Err(ApiError(StatusCode::BAD_REQUEST, format!("malformed message: {e}")))
        }
    }
}

#[derive(Deserialize)]
struct After {
    #[serde(default)]
    after: u64,
}

async fn messages(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<After>,
) -> Result<Json<Vec<ServerEnvelope>>, ApiError> {
    app.messages_after(&id, q.after).map(Json)
}

async fn log(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let records = app.log(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], write_log(&records)).into_response())
}

async fn ws(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<After>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    Ok(upgrade.on_upgrade(move |socket| stream(app, id, slot, q.after, socket)))
}

async fn stream(app: Arc<AppState>, id: String, slot: Arc<Mutex<Slot>>, after: u64, mut socket: WebSocket) {
    // subscribe before the backlog is read so nothing falls in between
    let (mut rx, backlog) = {
        let s = slot.lock().unwrap();
        (s.stream.subscribe(), s.sent.iter().filter(|m| m.seq > after).cloned().collect::<Vec<_>>())
    };
    let mut last = after;
    for m in backlog {
        last = m.seq;
        if send(&mut socket, &m).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            pushed = rx.recv() => match pushed {
                Ok(m) if m.seq <= last => {}
                Ok(m) => {
                    last = m.seq;
                    if send(&mut socket, &m).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let missed = app.messages_after(&id, last).unwrap_or_default();
                    for m in missed {
                        last = m.seq;
                        if send(&mut socket, &m).await.is_err() {
                            return;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let reply = match serde_json::from_str::<ClientMessage>(&text) {
                        // replies reach the client through the broadcast
                        Ok(msg) => app.submit(&id, msg).err().map(|e| e.1),
                        Err(e) => Some(format!("malformed message: {e}")),
                    };
                    if let Some(message) = reply {
                        let err = ServerEnvelope { seq: last, timestamp_ms: app.clock.now_ms(), message: ServerMessage::Error { message } };
                        if send(&mut socket, &err).await.is_err() {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, m: &ServerEnvelope) -> Result<(), axum::Error> {
    socket.send(Message::Text(serde_json::to_string(m).expect("messages serialize").into())).await
}

pub fn router(state: Arc<AppState>, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/maps", get(list_maps))
        .route("/api/maps/{id}", get(get_map))
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}/events", post(submit))
        .route("/api/sessions/{id}/messages", get(messages))
        .route("/api/sessions/{id}/ws", get(ws))
        .route("/api/sessions/{id}/log", get(log))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Runs the timer loop until the state is dropped elsewhere.
pub fn spawn_ticker(state: Arc<AppState>, interval: Duration) -> tokio::task::JoinHandle<()> {
    let weak = Arc::downgrade(&state);
    drop(state);
    tokio::spawn(async move {
        let mut every = tokio::time::interval(interval);
        every.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            every.tick().await;
            match weak.upgrade() {
                Some(s) => s.tick_all(),
                None => return,
            }
        }
    })
}

/// Serves on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig, clock: Arc<dyn Clock>) -> std::io::Result<()> {
    if let Some(dir) = &config.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let state = Arc::new(AppState::new(&config, clock));
    let _ticker = spawn_ticker(state.clone(), config.tick_interval);
    axum::serve(listener, router(state, config.static_dir.as_deref())).await
}
