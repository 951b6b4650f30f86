//! The evaluation service: alignment gating, registration, session lifecycle
//! and verdict bookkeeping.
//!
//! [`EvaluationService`] is plain synchronous state. [`ServiceHandle`] puts it
//! behind a single command queue served by one thread, so every mutation is
//! applied in arrival order and callers only ever get owned snapshots back.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::thread;

use chrono::{Local, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, oneshot};

use super::application::{apply_clearing_rule, validate_application, Application, ValidationReport, ValidationRules};
use super::card::{render_result_card, CardError};
use super::session::{
    transition, Action, FailReason, FailureOutcome, SessionError, SessionStatus, StopPolicy, TestSession, Transition,
    BANNER_ACTIVE, BANNER_READY,
};
use super::store::{FileStore, StoreError};
use crate::eventlog::EventLog;
use crate::track::{BeamSnapshot, SensorId};

/// Version of the JSON payloads served over HTTP and the feed.
pub const API_VERSION: u32 = 1;

pub trait Clock: Send {
    fn now(&self) -> NaiveDateTime;

    fn today(&self) -> NaiveDate {
        self.now().date()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> NaiveDateTime {
        Local::now().naive_local()
    }
}

/// Frozen clock for reproducible cards and tests.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub NaiveDateTime);

impl Clock for FixedClock {
    fn now(&self) -> NaiveDateTime {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentStatus {
    pub all_aligned: bool,
    pub misaligned: Vec<SensorId>,
    pub banner: String,
}

/// Alignment of the eight monitoring pairs. Gating beams do not count.
pub fn alignment_status(snapshot: &BeamSnapshot) -> AlignmentStatus {
    let misaligned: Vec<SensorId> = SensorId::monitoring().filter(|id| !snapshot.is_clear(*id)).collect();
    let all_aligned = misaligned.is_empty();
    AlignmentStatus {
        all_aligned,
        misaligned,
        banner: if all_aligned { BANNER_ACTIVE } else { BANNER_READY }.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("sensors misaligned: {misaligned:?}")]
    SensorsMisaligned { misaligned: Vec<SensorId>, banner: String },
    #[error("application has {} error(s)", .0.field_errors.len())]
    InvalidApplication(ValidationReport),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Card(#[from] CardError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub rules: ValidationRules,
    pub stop_policy: StopPolicy,
}

/// Session plus the display strings the console shows for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: TestSession,
    pub status_text: String,
    pub banner: String,
}

impl From<&TestSession> for SessionView {
    fn from(s: &TestSession) -> Self {
        Self { session: s.clone(), status_text: s.status_text().to_string(), banner: s.banner().to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsoleStatus {
    pub version: u32,
    /// `ready` or `active` while no candidate is registered.
    pub console: SessionStatus,
    pub banner: String,
    pub alignment: AlignmentStatus,
    pub beams: BeamSnapshot,
    /// Most recently registered session, if any.
    pub current_session: Option<SessionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickUpdate {
    pub session: String,
    pub t: f64,
    pub beams: BeamSnapshot,
    pub gate_count: u8,
    pub lcd: String,
}

/// Push-feed message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeedEvent {
    Tick {
        version: u32,
        #[serde(flatten)]
        tick: TickUpdate,
        status: SessionStatus,
        banner: String,
    },
    Session {
        version: u32,
        session: SessionView,
    },
    Status {
        version: u32,
        status: ConsoleStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResponse {
    #[serde(flatten)]
    pub report: ValidationReport,
    pub popup: String,
    /// The application with every flagged field blanked.
    pub cleared: Application,
}

pub struct EvaluationService {
    config: ServiceConfig,
    clock: Box<dyn Clock>,
    store: Option<FileStore>,
    sessions: BTreeMap<String, TestSession>,
    /// Logs kept in memory when there is no store.
    logs: BTreeMap<String, EventLog>,
    snapshot: BeamSnapshot,
    console: SessionStatus,
    current: Option<String>,
    last_t: BTreeMap<String, f64>,
    next_id: u64,
    feed: broadcast::Sender<FeedEvent>,
}

impl EvaluationService {
    /// Loads any sessions already in `store`; ids continue after the highest.
    pub fn new(config: ServiceConfig, clock: Box<dyn Clock>, store: Option<FileStore>) -> Result<Self, ServiceError> {
        let mut sessions = BTreeMap::new();
        if let Some(store) = &store {
            for id in store.session_ids()? {
                let s = store.load_session(&id)?;
                sessions.insert(id, s);
            }
        }
        let next_id = sessions.keys().filter_map(|id| id.parse::<u64>().ok()).max().unwrap_or(0) + 1;
        let (feed, _) = broadcast::channel(1024);
        let mut svc = Self {
            config,
            clock,
            store,
            sessions,
            logs: BTreeMap::new(),
            snapshot: BeamSnapshot::all_clear(),
            console: SessionStatus::Ready,
            current: None,
            last_t: BTreeMap::new(),
            next_id,
            feed,
        };
        svc.set_snapshot(BeamSnapshot::all_clear());
        Ok(svc)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<FeedEvent> {
        self.feed.subscribe()
    }

    fn publish(&self, event: FeedEvent) {
        // No subscribers is fine.
        let _ = self.feed.send(event);
    }

    fn publish_session(&self, id: &str) {
        if let Some(s) = self.sessions.get(id) {
            self.publish(FeedEvent::Session { version: API_VERSION, session: s.into() });
        }
    }

    /// New beam snapshot from the track; moves the console between ready and active.
    pub fn set_snapshot(&mut self, snapshot: BeamSnapshot) {
        let aligned = alignment_status(&snapshot).all_aligned;
        let changed = snapshot != self.snapshot;
        self.snapshot = snapshot;
        let action = if aligned { Action::SensorsAligned } else { Action::SensorsMisaligned };
        if let Transition::Moved(to) = transition(self.console, action) {
            self.console = to;
        }
        if changed {
            self.publish(FeedEvent::Status { version: API_VERSION, status: self.status() });
        }
    }

    pub fn snapshot(&self) -> &BeamSnapshot {
        &self.snapshot
    }

    pub fn status(&self) -> ConsoleStatus {
        let alignment = alignment_status(&self.snapshot);
        ConsoleStatus {
            version: API_VERSION,
            console: self.console,
            banner: if self.console == SessionStatus::Active { BANNER_ACTIVE } else { BANNER_READY }.to_string(),
            alignment,
            beams: self.snapshot.clone(),
            current_session: self.current.as_ref().and_then(|id| self.sessions.get(id)).map(SessionView::from),
        }
    }

    pub fn validate(&self, app: &Application) -> ValidationResponse {
        let report = validate_application(app, self.clock.today(), &self.config.rules);
        ValidationResponse { popup: report.popup_text(), cleared: apply_clearing_rule(app, &report), report }
    }

    fn require_aligned(&self) -> Result<(), ServiceError> {
        let a = alignment_status(&self.snapshot);
        if a.all_aligned {
            Ok(())
        } else {
            Err(ServiceError::SensorsMisaligned { misaligned: a.misaligned, banner: a.banner })
        }
    }

    fn persist(&self, id: &str) -> Result<(), ServiceError> {
        if let (Some(store), Some(s)) = (&self.store, self.sessions.get(id)) {
            store.save_session(s)?;
        }
        Ok(())
    }

    fn get_mut(&mut self, id: &str) -> Result<&mut TestSession, ServiceError> {
        self.sessions.get_mut(id).ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session(&self, id: &str) -> Result<TestSession, ServiceError> {
        self.sessions.get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.keys().cloned().collect()
    }

    /// Registers a candidate. Needs every monitoring pair aligned and a valid application.
    pub fn submit(&mut self, app: Application) -> Result<TestSession, ServiceError> {
        self.require_aligned()?;
        let report = validate_application(&app, self.clock.today(), &self.config.rules);
        if !report.valid {
            return Err(ServiceError::InvalidApplication(report));
        }
        let id = format!("{:06}", self.next_id);
        self.next_id += 1;
        let session = TestSession::register(id.clone(), app, self.clock.now());
        self.sessions.insert(id.clone(), session.clone());
        self.persist(&id)?;
        self.current = Some(id.clone());
        self.publish_session(&id);
        Ok(session)
    }

    /// CANCEL on the form: nothing is recorded and the form comes back empty.
    pub fn cancel(&mut self) -> Application {
        if let Transition::Moved(to) = transition(self.console, Action::Cancel) {
            self.console = to;
        }
        Application::default()
    }

    pub fn start(&mut self, id: &str) -> Result<TestSession, ServiceError> {
        self.get_mut(id)?;
        self.require_aligned()?;
        self.get_mut(id)?.start()?;
        self.last_t.insert(id.to_string(), 0.0);
        self.persist(id)?;
        self.current = Some(id.to_string());
        self.publish_session(id);
        self.session(id)
    }

    pub fn record_failure(&mut self, id: &str, reason: FailReason, t: f64) -> Result<FailureOutcome, ServiceError> {
        let now = self.clock.now();
        let outcome = self.get_mut(id)?.record_failure(reason, t, Some(now));
        self.persist(id)?;
        self.publish_session(id);
        Ok(outcome)
    }

    /// Operator STOP at the latest simulated time seen for the session.
    pub fn stop(&mut self, id: &str) -> Result<TestSession, ServiceError> {
        let t = self.last_t.get(id).copied().unwrap_or(0.0);
        let now = self.clock.now();
        let policy = self.config.stop_policy;
        self.get_mut(id)?.stop(t, policy, Some(now))?;
        self.persist(id)?;
        self.publish_session(id);
        self.session(id)
    }

    /// One tick from a live run. Returns whether the session is still running.
    pub fn live_tick(&mut self, tick: TickUpdate) -> bool {
        self.set_snapshot(tick.beams.clone());
        let Some(s) = self.sessions.get_mut(&tick.session) else { return false };
        if s.status != SessionStatus::Running {
            return false;
        }
        s.gate_count = tick.gate_count;
        let (status, banner) = (s.status, s.banner().to_string());
        self.last_t.insert(tick.session.clone(), tick.t);
        self.publish(FeedEvent::Tick { version: API_VERSION, tick, status, banner });
        true
    }

    /// Stores the run's event log and points the session at it.
    pub fn attach_log(&mut self, id: &str, log: EventLog) -> Result<(), ServiceError> {
        self.get_mut(id)?;
        let name = match &self.store {
            Some(store) => store.save_log(id, &log)?,
            None => FileStore::log_name(id),
        };
        self.logs.insert(id.to_string(), log);
        self.get_mut(id)?.event_log = Some(name);
        self.persist(id)
    }

    pub fn event_log(&self, id: &str) -> Result<Option<EventLog>, ServiceError> {
        if let Some(log) = self.logs.get(id) {
            return Ok(Some(log.clone()));
        }
        let session = self.session(id)?;
        match (&self.store, &session.event_log) {
            (Some(store), Some(name)) => Ok(Some(store.load_log(name)?)),
            _ => Ok(None),
        }
    }

    /// Card issued at the verdict time, or now if the verdict has none.
    pub fn card(&self, id: &str) -> Result<String, ServiceError> {
        let s = self.sessions.get(id).ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        let issued = s.verdict_at.unwrap_or_else(|| self.clock.now());
        Ok(render_result_card(s, issued)?)
    }
}

type Job = Box<dyn FnOnce(&mut EvaluationService) + Send>;

/// Cloneable front end to a service running on its own thread.
#[derive(Clone)]
pub struct ServiceHandle {
    tx: mpsc::Sender<Job>,
}

impl ServiceHandle {
    /// Moves `service` onto a worker thread. The thread exits once every
    /// handle is dropped and hands the service back through the join handle.
    pub fn spawn(mut service: EvaluationService) -> (Self, thread::JoinHandle<EvaluationService>) {
        let (tx, rx) = mpsc::channel::<Job>();
        let worker = thread::Builder::new()
            .name("evaluation-service".into())
            .spawn(move || {
                for job in rx {
                    job(&mut service);
                }
                service
            })
            .expect("spawn service thread");
        (Self { tx }, worker)
    }

    fn enqueue<R: Send + 'static>(
        &self,
        f: impl FnOnce(&mut EvaluationService) -> R + Send + 'static,
    ) -> oneshot::Receiver<R> {
        let (reply, rx) = oneshot::channel();
        let job: Job = Box::new(move |svc| {
            let _ = reply.send(f(svc));
        });
        self.tx.send(job).expect("service thread is running");
        rx
    }

    pub async fn call<R: Send + 'static>(&self, f: impl FnOnce(&mut EvaluationService) -> R + Send + 'static) -> R {
        self.enqueue(f).await.expect("service thread replied")
    }

    /// For callers outside an async runtime, such as the simulation thread.
    pub fn call_blocking<R: Send + 'static>(&self, f: impl FnOnce(&mut EvaluationService) -> R + Send + 'static) -> R {
        self.enqueue(f).blocking_recv().expect("service thread replied")
    }
}
