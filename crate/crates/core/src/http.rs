//! HTTP API and server-sent event feed for the operator console.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/applications/validate` | application JSON; report, pop-up text, cleared form |
//! | POST | `/sessions` | application JSON; 201 with the registered session |
//! | POST | `/sessions/{id}/start` | session |
//! | POST | `/sessions/{id}/stop` | session |
//! | GET | `/sessions/{id}` | session |
//! | GET | `/sessions/{id}/card` | `text/plain` result card |
//! | GET | `/sessions/{id}/log` | event log, one JSON record per line |
//! | GET | `/status` | console status, alignment and banner |
//! | PUT | `/sensors` | `{"blocked": ["S5"]}`; operator re-alignment |
//! | GET | `/feed` | `text/event-stream` of feed events |

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use crate::evaluation::application::Application;
use crate::evaluation::service::{
    ConsoleStatus, EvaluationService, ServiceConfig, ServiceError, ServiceHandle, SessionView, SystemClock, TickUpdate,
    ValidationResponse,
};
use crate::evaluation::session::{SessionError, SessionStatus};
use crate::evaluation::store::{FileStore, StoreError};
use crate::link::LinkParams;
use crate::scenario::Scenario;
use crate::sim::{simulate_with, LoopControl, SimObserver, SimOptions, TickFrame};
use crate::track::{BeamSnapshot, SensorId, TrackLayout};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// What a started session drives, if anything.
#[derive(Debug, Clone)]
pub struct LiveRun {
    pub layout: Arc<TrackLayout>,
    pub scenario: Scenario,
    pub link: LinkParams,
    pub sim: SimOptions,
    /// Simulated seconds per wall-clock second; 0 or less means unpaced.
    pub pace: f64,
}

#[derive(Clone)]
pub struct AppState {
    pub service: ServiceHandle,
    pub live: Option<Arc<LiveRun>>,
}

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        let (code, body) = match self.0 {
            ServiceError::SensorsMisaligned { misaligned, banner } => (
                StatusCode::CONFLICT,
                json!({ "error": "system_ready", "message": message, "banner": banner, "misaligned": misaligned }),
            ),
            ServiceError::InvalidApplication(report) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "invalid_application", "message": message, "popup": report.popup_text(), "report": report }),
            ),
            ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, json!({ "error": "not_found", "message": message })),
            ServiceError::Session(SessionError::InvalidTransition { status, .. }) => (
                StatusCode::CONFLICT,
                json!({ "error": "invalid_transition", "message": message, "status": status }),
            ),
            ServiceError::Card(_) => (StatusCode::CONFLICT, json!({ "error": "no_verdict", "message": message })),
            ServiceError::Store(_) => {
                log::error!("store failure: {message}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": "store", "message": message }))
            }
        };
        (code, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn validate(State(st): State<AppState>, Json(app): Json<Application>) -> Json<ValidationResponse> {
    Json(st.service.call(move |svc| svc.validate(&app)).await)
}

async fn submit(State(st): State<AppState>, Json(app): Json<Application>) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let s = st.service.call(move |svc| svc.submit(app)).await?;
    Ok((StatusCode::CREATED, Json((&s).into())))
}

async fn start(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let sid = id.clone();
    let s = st.service.call(move |svc| svc.start(&sid)).await?;
    if let Some(live) = st.live.clone() {
        spawn_live_run(st.service.clone(), live, s.clone());
    }
    Ok(Json((&s).into()))
}

async fn stop(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = st.service.call(move |svc| svc.stop(&id)).await?;
    Ok(Json((&s).into()))
}

async fn session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = st.service.call(move |svc| svc.session(&id)).await?;
    Ok(Json((&s).into()))
}

async fn card(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = st.service.call(move |svc| svc.card(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn event_log(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let log = st.service.call(move |svc| svc.event_log(&id)).await?;
    Ok(match log {
        Some(log) => ([(header::CONTENT_TYPE, "application/x-ndjson")], log.to_jsonl()).into_response(),
        None => (StatusCode::NOT_FOUND, Json(json!({ "error": "no_log", "message": "session has no event log" }))).into_response(),
    })
}

async fn status(State(st): State<AppState>) -> Json<ConsoleStatus> {
    Json(st.service.call(|svc| svc.status()).await)
}

#[derive(Debug, Serialize, Deserialize)]
struct SensorsBody {
    blocked: Vec<SensorId>,
}

async fn set_sensors(State(st): State<AppState>, Json(body): Json<SensorsBody>) -> Json<ConsoleStatus> {
    Json(
        st.service
            .call(move |svc| {
                svc.set_snapshot(BeamSnapshot::with_blocked(&body.blocked));
                svc.status()
            })
            .await,
    )
}

async fn feed(State(st): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = st.service.call(|svc| svc.subscribe()).await;
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let data = serde_json::to_string(&ev).expect("feed event serialises");
                    return Some((Ok(Event::default().data(data)), rx));
                }
                Err(RecvError::Lagged(n)) => log::warn!("feed subscriber lagged, {n} events skipped"),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/applications/validate", post(validate))
        .route("/sessions", post(submit))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/stop", post(stop))
        .route("/sessions/{id}/card", get(card))
        .route("/sessions/{id}/log", get(event_log))
        .route("/status", get(status))
        .route("/sensors", put(set_sensors))
        .route("/feed", get(feed))
        .with_state(state)
}

/// Forwards each tick to the service and turns a stopped session into an
/// operator stop for the loop.
struct LiveObserver {
    service: ServiceHandle,
    id: String,
    pace: f64,
    started: Instant,
}

impl SimObserver for LiveObserver {
    fn on_tick(&mut self, frame: &TickFrame<'_>) -> LoopControl {
        if self.pace > 0.0 {
            let due = Duration::from_secs_f64(frame.t / self.pace);
            if let Some(wait) = due.checked_sub(self.started.elapsed()) {
                thread::sleep(wait);
            }
        }
        let tick = TickUpdate {
            session: self.id.clone(),
            t: frame.t,
            beams: frame.snapshot.clone(),
            gate_count: frame.gate_count,
            lcd: frame.lcd.clone(),
        };
        let running = self.service.call_blocking(move |svc| svc.live_tick(tick));
        if running { LoopControl::Continue } else { LoopControl::Stop }
    }
}

fn spawn_live_run(service: ServiceHandle, live: Arc<LiveRun>, session: crate::evaluation::session::TestSession) {
    let id = session.id.clone();
    let spawned = thread::Builder::new().name(format!("live-{id}")).spawn(move || {
        let mut sim_session = session;
        let mut observer = LiveObserver { service: service.clone(), id: id.clone(), pace: live.pace, started: Instant::now() };
        let result = simulate_with(&live.layout, &live.scenario, &live.link, &mut sim_session, &live.sim, &mut observer);
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                log::error!("live run for session {id} failed to simulate: {e}");
                return;
            }
        };
        service.call_blocking(move |svc| {
            let still_running = svc.session(&id).map(|s| s.status == SessionStatus::Running).unwrap_or(false);
            match sim_session.status {
                SessionStatus::Failed => {
                    if let (Some(reason), Some(t)) = (sim_session.fail_reason, sim_session.verdict_t) {
                        if let Err(e) = svc.record_failure(&id, reason, t) {
                            log::error!("session {id}: {e}");
                        }
                    }
                }
                // Scripted STOP inside the scenario.
                SessionStatus::Passed if still_running => {
                    if let Err(e) = svc.stop(&id) {
                        log::error!("session {id}: {e}");
                    }
                }
                _ => {}
            }
            if let Err(e) = svc.attach_log(&id, outcome.log) {
                log::error!("session {id}: cannot keep event log: {e}");
            }
        });
    });
    if let Err(e) = spawned {
        log::error!("cannot start live run: {e}");
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub store: PathBuf,
    pub layout: TrackLayout,
    pub scenario: Option<Scenario>,
    pub link: LinkParams,
    pub sim: SimOptions,
    pub pace: f64,
    /// Monitoring sensors reported out of line at startup.
    pub knocked: Vec<SensorId>,
}

/// Builds the service and router for `config` without binding a socket.
pub fn build_app(config: &ServeConfig) -> Result<(Router, ServiceHandle), ServeError> {
    let store = FileStore::open(&config.store)?;
    let service_config = ServiceConfig { stop_policy: config.sim.stop_policy, ..ServiceConfig::default() };
    let mut svc = EvaluationService::new(service_config, Box::new(SystemClock), Some(store))?;
    svc.set_snapshot(BeamSnapshot::with_blocked(&config.knocked));
    let (handle, _worker) = ServiceHandle::spawn(svc);
    let live = config.scenario.clone().map(|scenario| {
        Arc::new(LiveRun {
            layout: Arc::new(config.layout.clone()),
            scenario,
            link: config.link,
            sim: config.sim,
            pace: config.pace,
        })
    });
    Ok((router(AppState { service: handle.clone(), live }), handle))
}

pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let (app, _handle) = build_app(&config)?;
    let listener = TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

pub fn serve_blocking(config: ServeConfig) -> Result<(), ServeError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(config))
}
