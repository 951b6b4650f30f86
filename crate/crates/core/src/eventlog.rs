//! Line-delimited event log: one JSON object per line, tagged by `kind`.
//!
//! Field names are stable; the replay oracle and golden tests read them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::central::GateOutcome;
use crate::evaluation::session::{FailReason, SessionStatus};
use crate::link::{Direction, Fate, FramePayload, LinkParams};
use crate::scenario::{VehicleSpec, Waypoint};
use crate::track::{PostId, SensorId, SensorRole};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("event log line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub operator_stop_at: Option<f64>,
    pub vehicle: VehicleSpec,
    pub halt_threshold: f64,
    pub restart_on_enable: bool,
    pub refractory: f64,
    pub strict_order: bool,
    pub strict_stop: bool,
    pub link: LinkParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitEvent {
    Enabled,
    Disabled,
    Noise,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Passed,
    Failed,
    /// Run ended with no failure and no operator stop.
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header(RunHeader),
    Control {
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        speed: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steer: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goto: Option<Waypoint>,
    },
    /// Encoder falling edges counted during the tick ending at `t` (only non-zero counts).
    Encoder { t: f64, edges: u64 },
    Trounce { t: f64, post: PostId },
    Edge { t: f64, sensor: SensorId, role: SensorRole },
    Gate {
        t: f64,
        sensor: SensorId,
        outcome: GateOutcome,
        count: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<FramePayload>,
    },
    Lcd { t: f64, text: String },
    /// Logged at send time; `fate` is decided then.
    Frame {
        t: f64,
        seq: u64,
        payload: FramePayload,
        direction: Direction,
        deliver_t: f64,
        fate: Fate,
    },
    Rx { t: f64, seq: u64, payload: FramePayload, direction: Direction },
    /// Delivered frame still in flight when the run ended.
    Expired { t: f64, seq: u64 },
    Unit { t: f64, event: UnitEvent },
    /// Halt frame reached the central unit; `halt_t` is when the vehicle unit raised it.
    Relay { t: f64, halt_t: f64, anomaly: bool },
    /// STOP pressed, scripted or live.
    OperatorStop { t: f64 },
    Session {
        t: f64,
        status: SessionStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<FailReason>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    End {
        t: f64,
        verdict: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<FailReason>,
        gate_count: u8,
    },
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::Header(_) => 0.0,
            Record::Control { t, .. }
            | Record::Encoder { t, .. }
            | Record::Trounce { t, .. }
            | Record::Edge { t, .. }
            | Record::Gate { t, .. }
            | Record::Lcd { t, .. }
            | Record::Frame { t, .. }
            | Record::Rx { t, .. }
            | Record::Expired { t, .. }
            | Record::Unit { t, .. }
            | Record::Relay { t, .. }
            | Record::OperatorStop { t, .. }
            | Record::Session { t, .. }
            | Record::End { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub records: Vec<Record>,
}

impl EventLog {
    pub fn push(&mut self, record: Record) {
        debug_assert!(
            self.records.last().is_none_or(|last| last.t() <= record.t()),
            "event log time went backwards"
        );
        self.records.push(record);
    }

    pub fn header(&self) -> Option<&RunHeader> {
        match self.records.first() {
            Some(Record::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogParseError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| LogParseError { line: i + 1, message: e.to_string() })
            })
            .collect::<Result<Vec<Record>, _>>()?;
        Ok(Self { records })
    }

    /// Bytes sent on `direction`, in send order.
    pub fn sent_bytes(&self, direction: Direction) -> Vec<u8> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Frame { payload, direction: d, .. } if *d == direction => Some(payload.as_byte()),
                _ => None,
            })
            .collect()
    }

    /// Bytes received on `direction`, in arrival order.
    pub fn received_bytes(&self, direction: Direction) -> Vec<u8> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Rx { payload, direction: d, .. } if *d == direction => Some(payload.as_byte()),
                _ => None,
            })
            .collect()
    }
}
