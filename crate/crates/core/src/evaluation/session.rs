//! Test session lifecycle, verdicts and operator-facing banners.

use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::application::Application;
use crate::central::FINAL_COUNT;

pub const BANNER_READY: &str = "SYSTEM READY – SENSORS MISALIGNED";
pub const BANNER_ACTIVE: &str = "SYSTEM ACTIVE – FILL IN CANDIDATE DETAILS";
pub const BANNER_REGISTERED: &str = "CANDIDATE REGISTERED – PRESS START";
pub const BANNER_RUNNING: &str = "TEST IN PROGRESS";
pub const TEST_PASSED: &str = "TEST PASSED";
pub const TEST_FAILED: &str = "TEST FAILED";
pub const BANNER_SENSORS_MISALIGNED: &str = "SENSORS MISALIGNED – TEST FINISHED";
pub const BANNER_VEHICLE_HALT: &str = "VEHICLE HALT – TEST FINISHED";
pub const BANNER_INCOMPLETE: &str = "INCOMPLETE DRIVE – TEST FINISHED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Ready,
    Active,
    Registered,
    Running,
    Passed,
    Failed,
}

impl SessionStatus {
    pub const ALL: [SessionStatus; 6] = [
        SessionStatus::Ready,
        SessionStatus::Active,
        SessionStatus::Registered,
        SessionStatus::Running,
        SessionStatus::Passed,
        SessionStatus::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionStatus::Passed | SessionStatus::Failed)
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    SensorsMisaligned,
    VehicleHalt,
    /// Only produced by strict-stop mode.
    IncompleteDrive,
}

impl FailReason {
    pub fn banner(self) -> &'static str {
        match self {
            FailReason::SensorsMisaligned => BANNER_SENSORS_MISALIGNED,
            FailReason::VehicleHalt => BANNER_VEHICLE_HALT,
            FailReason::IncompleteDrive => BANNER_INCOMPLETE,
        }
    }
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    SensorsAligned,
    SensorsMisaligned,
    Submit,
    Cancel,
    Start,
    Fail,
    Stop,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::SensorsAligned,
        Action::SensorsMisaligned,
        Action::Submit,
        Action::Cancel,
        Action::Start,
        Action::Fail,
        Action::Stop,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Moved(SessionStatus),
    /// Accepted, nothing changes.
    Stay,
    /// Late event after the verdict or before the run; logged as an anomaly.
    Ignored,
    Rejected,
}

/// The lifecycle table. Everything not listed is rejected.
pub fn transition(status: SessionStatus, action: Action) -> Transition {
    use Action as A;
    use SessionStatus as S;
    match (status, action) {
        (_, A::Fail) if status != S::Running => Transition::Ignored,
        (S::Ready, A::SensorsAligned) => Transition::Moved(S::Active),
        (S::Active, A::SensorsMisaligned) => Transition::Moved(S::Ready),
        (S::Active, A::Submit) => Transition::Moved(S::Registered),
        (S::Active, A::Cancel) => Transition::Stay,
        (S::Registered, A::Start) => Transition::Moved(S::Running),
        (S::Running, A::Fail) => Transition::Moved(S::Failed),
        (S::Running, A::Stop) => Transition::Moved(S::Passed),
        (_, A::SensorsAligned | A::SensorsMisaligned) => Transition::Stay,
        _ => Transition::Rejected,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("session {id}: cannot {action:?} while {status}")]
    InvalidTransition { id: String, status: SessionStatus, action: Action },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureOutcome {
    Recorded,
    /// Session was not running; verdict untouched.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StopPolicy {
    /// Stopping before the eighth gate crossing fails the test.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSession {
    pub id: String,
    pub application: Application,
    pub status: SessionStatus,
    pub fail_reason: Option<FailReason>,
    pub gate_count: u8,
    pub created_at: NaiveDateTime,
    pub verdict_at: Option<NaiveDateTime>,
    /// Simulation clock at the verdict, seconds.
    pub verdict_t: Option<f64>,
    pub warnings: Vec<String>,
    pub anomalies: Vec<String>,
    /// Event log file name within the store.
    pub event_log: Option<String>,
}

impl TestSession {
    /// New session in the registered state.
    pub fn register(id: impl Into<String>, application: Application, created_at: NaiveDateTime) -> Self {
        Self {
            id: id.into(),
            application,
            status: SessionStatus::Registered,
            fail_reason: None,
            gate_count: 0,
            created_at,
            verdict_at: None,
            verdict_t: None,
            warnings: Vec::new(),
            anomalies: Vec::new(),
            event_log: None,
        }
    }

    fn apply(&mut self, action: Action) -> Result<Transition, SessionError> {
        match transition(self.status, action) {
            Transition::Rejected => Err(SessionError::InvalidTransition {
                id: self.id.clone(),
                status: self.status,
                action,
            }),
            Transition::Moved(to) => {
                self.status = to;
                Ok(Transition::Moved(to))
            }
            other => Ok(other),
        }
    }

    pub fn start(&mut self) -> Result<(), SessionError> {
        self.apply(Action::Start).map(|_| ())
    }

    pub fn record_failure(&mut self, reason: FailReason, t: f64, at: Option<NaiveDateTime>) -> FailureOutcome {
        match self.apply(Action::Fail) {
            Ok(Transition::Moved(_)) => {
                self.fail_reason = Some(reason);
                self.verdict_t = Some(t);
                self.verdict_at = at;
                FailureOutcome::Recorded
            }
            _ => {
                let note = format!("late failure {reason} at t={t} ignored while {}", self.status);
                log::warn!("session {}: {note}", self.id);
                self.anomalies.push(note);
                FailureOutcome::Ignored
            }
        }
    }

    /// Operator STOP. A short drive passes with a warning unless `policy.strict`.
    pub fn stop(&mut self, t: f64, policy: StopPolicy, at: Option<NaiveDateTime>) -> Result<(), SessionError> {
        if self.status != SessionStatus::Running {
            return self.apply(Action::Stop).map(|_| ());
        }
        if self.gate_count != FINAL_COUNT {
            if policy.strict {
                self.record_failure(FailReason::IncompleteDrive, t, at);
                return Ok(());
            }
            self.warnings.push(format!("early stop: gate count {} of {FINAL_COUNT}", self.gate_count));
        }
        self.apply(Action::Stop)?;
        self.verdict_t = Some(t);
        self.verdict_at = at;
        Ok(())
    }

    /// Status indicator text.
    pub fn status_text(&self) -> &'static str {
        match self.status {
            SessionStatus::Ready => BANNER_READY,
            SessionStatus::Active => BANNER_ACTIVE,
            SessionStatus::Registered => BANNER_REGISTERED,
            SessionStatus::Running => BANNER_RUNNING,
            SessionStatus::Passed => TEST_PASSED,
            SessionStatus::Failed => TEST_FAILED,
        }
    }

    /// Message line: the failure reason when failed, otherwise the status text.
    pub fn banner(&self) -> &'static str {
        match (self.status, self.fail_reason) {
            (SessionStatus::Failed, Some(reason)) => reason.banner(),
            _ => self.status_text(),
        }
    }
}
