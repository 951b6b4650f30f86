//! Verdict oracle over a recorded event log.
//!
//! This reads the raw records (beam edges, trounces, encoder counts, link
//! frames, operator stops) and re-derives the verdict by a direct scan of the
//! rules. It shares no rule code with the incremental controllers on purpose;
//! agreement between the two is the check.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::evaluation::session::FailReason;
use crate::eventlog::{EventLog, Record, RunHeader, Verdict};
use crate::link::{Direction, FramePayload};
use crate::track::{SensorId, SensorRole};

const GATE_ORDER: [u8; 8] = [9, 10, 10, 12, 12, 11, 11, 12];
const FULL_COUNT: u8 = 8;
const SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("event log has no header record")]
    MissingHeader,
    #[error("event log header has non-positive dt {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub verdict: Verdict,
    pub reason: Option<FailReason>,
    /// Time of the verdict, or of the last tick when undecided.
    pub t: f64,
    pub gate_count: u8,
    /// E/D bytes the gate rule says should have been sent, in order.
    pub expected_commands: Vec<u8>,
    /// Halt times the gap scan predicts (vehicle-side detection times).
    pub predicted_halts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordedOutcome {
    pub verdict: Verdict,
    pub reason: Option<FailReason>,
    pub gate_count: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub oracle: ReplayOutcome,
    pub recorded: Option<RecordedOutcome>,
    /// Human-readable mismatches; empty when everything agrees.
    pub disagreements: Vec<String>,
}

impl ReplayReport {
    pub fn agrees(&self) -> bool {
        self.disagreements.is_empty()
    }
}

fn gating_slot(sensor: SensorId) -> Option<usize> {
    (9..=12).contains(&sensor.number()).then(|| usize::from(sensor.number() - 9))
}

/// Gate parity with refractory filtering. Returns accepted `(t, count)` pairs.
fn scan_gates(log: &EventLog, h: &RunHeader) -> Vec<(f64, u8)> {
    let mut last: [Option<f64>; 4] = [None; 4];
    let mut accepted = Vec::new();
    for r in &log.records {
        let Record::Edge { t, sensor, role: SensorRole::Gating } = r else { continue };
        let Some(slot) = gating_slot(*sensor) else { continue };
        let count = accepted.len();
        let cooled = last[slot].is_none_or(|p| t - p > h.refractory);
        let in_order = !h.strict_order || GATE_ORDER.get(count) == Some(&sensor.number());
        if cooled && count < usize::from(FULL_COUNT) && in_order {
            last[slot] = Some(*t);
            accepted.push((*t, (count + 1) as u8));
        }
    }
    accepted
}

/// Enabled spans as seen by the vehicle: `(enable_rx_t, disable_rx_t)`.
fn enable_spans(log: &EventLog) -> Vec<(f64, Option<f64>)> {
    let mut spans: Vec<(f64, Option<f64>)> = Vec::new();
    for r in &log.records {
        let Record::Rx { t, payload, direction: Direction::Downlink, .. } = r else { continue };
        match payload {
            FramePayload::Enable => {
                if let Some(open) = spans.last_mut().filter(|s| s.1.is_none()) {
                    open.1 = Some(*t);
                }
                spans.push((*t, None));
            }
            FramePayload::Disable => {
                if let Some(open) = spans.last_mut().filter(|s| s.1.is_none()) {
                    open.1 = Some(*t);
                }
            }
            FramePayload::Halt => {}
        }
    }
    spans
}

/// Naive gap scan: for each enabled span, the first tick whose distance to
/// the latest reference (encoder edge, or the enable itself) exceeds the
/// threshold. At most one halt per span.
fn scan_halts(log: &EventLog, h: &RunHeader, last_tick: u64) -> Vec<f64> {
    let edges: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Encoder { t, edges } if *edges > 0 => Some(*t),
            _ => None,
        })
        .collect();
    let mut halts = Vec::new();
    for (on, off) in enable_spans(log) {
        let first = (on / h.dt + SLACK).floor() as u64 + 1;
        for k in first..=last_tick {
            let t = k as f64 * h.dt;
            // Commands are read after the vehicle checks its timer within a tick.
            if off.is_some_and(|d| t > d) {
                break;
            }
            let last_edge = edges[..edges.partition_point(|e| *e <= t)].last().copied();
            let reference = if h.restart_on_enable {
                Some(last_edge.map_or(on, |e| e.max(on)))
            } else {
                last_edge.or(Some(on))
            };
            if let Some(r) = reference {
                if t - r > h.halt_threshold + SLACK {
                    halts.push(t);
                    break;
                }
            }
        }
    }
    halts
}

pub fn replay(log: &EventLog) -> Result<ReplayOutcome, ReplayError> {
    let h = log.header().ok_or(ReplayError::MissingHeader)?;
    if !(h.dt > 0.0) {
        return Err(ReplayError::BadStep(h.dt));
    }
    let end_t = log.records.last().map_or(0.0, Record::t);
    let last_tick = (end_t / h.dt + SLACK).floor() as u64;

    let misaligned_t = log.records.iter().find_map(|r| match r {
        Record::Edge { t, role: SensorRole::Monitoring, .. } | Record::Trounce { t, .. } => Some(*t),
        _ => None,
    });

    let gates = scan_gates(log, h);
    let expected_commands = gates.iter().map(|(_, n)| if n % 2 == 1 { b'E' } else { b'D' }).collect();

    // A misaligned tick ends the run before the vehicle checks its timer.
    let halt_scan_end = misaligned_t.map_or(last_tick, |m| ((m / h.dt + SLACK).floor() as u64).saturating_sub(1));
    let predicted_halts = scan_halts(log, h, halt_scan_end.min(last_tick));
    // Where each predicted halt's uplink frame landed, if it did.
    let mut halt_seq: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &log.records {
        if let Record::Frame { t, seq, payload: FramePayload::Halt, direction: Direction::Uplink, .. } = r {
            if predicted_halts.contains(t) {
                halt_seq.insert(*seq, *t);
            }
        }
    }
    let halt_rx_t = log.records.iter().find_map(|r| match r {
        Record::Rx { t, seq, direction: Direction::Uplink, .. } if halt_seq.contains_key(seq) => Some(*t),
        _ => None,
    });

    let scripted_stop = h.operator_stop_at.map(|s| (s / h.dt - SLACK).ceil().max(0.0) * h.dt);
    let live_stop = log.records.iter().find_map(|r| match r {
        Record::OperatorStop { t } => Some(*t),
        _ => None,
    });
    let stop_t = match (scripted_stop, live_stop) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
    .filter(|s| *s <= end_t + SLACK);

    let failure = match (misaligned_t, halt_rx_t) {
        (Some(m), Some(x)) if x < m => Some((x, FailReason::VehicleHalt)),
        (Some(m), _) => Some((m, FailReason::SensorsMisaligned)),
        (None, Some(x)) => Some((x, FailReason::VehicleHalt)),
        (None, None) => None,
    };
    let count_at = |t: f64| gates.iter().take_while(|(g, _)| *g <= t + SLACK).last().map_or(0, |(_, n)| *n);

    let failure = failure.filter(|(ft, _)| stop_t.is_none_or(|s| *ft <= s + SLACK));
    let (verdict, reason, t) = match (failure, stop_t) {
        (Some((ft, why)), _) => (Verdict::Failed, Some(why), ft),
        (None, Some(s)) if h.strict_stop && count_at(s) != FULL_COUNT => {
            (Verdict::Failed, Some(FailReason::IncompleteDrive), s)
        }
        (None, Some(s)) => (Verdict::Passed, None, s),
        (None, None) => (Verdict::Undecided, None, end_t),
    };

    Ok(ReplayOutcome {
        verdict,
        reason,
        t,
        gate_count: count_at(t),
        expected_commands,
        predicted_halts,
    })
}

/// Replays and compares with what the log itself recorded.
pub fn replay_and_compare(log: &EventLog) -> Result<ReplayReport, ReplayError> {
    let oracle = replay(log)?;
    let recorded = log.records.iter().rev().find_map(|r| match r {
        Record::End { verdict, reason, gate_count, .. } => {
            Some(RecordedOutcome { verdict: *verdict, reason: *reason, gate_count: *gate_count })
        }
        _ => None,
    });
    let mut disagreements = Vec::new();
    match &recorded {
        None => disagreements.push("log has no end record".to_string()),
        Some(rec) => {
            if rec.verdict != oracle.verdict || rec.reason != oracle.reason {
                disagreements.push(format!(
                    "verdict: recorded {:?}/{:?}, oracle {:?}/{:?}",
                    rec.verdict, rec.reason, oracle.verdict, oracle.reason
                ));
            }
            if rec.gate_count != oracle.gate_count {
                disagreements.push(format!("gate count: recorded {}, oracle {}", rec.gate_count, oracle.gate_count));
            }
        }
    }
    let sent = log.sent_bytes(Direction::Downlink);
    if sent != oracle.expected_commands {
        disagreements.push(format!(
            "commands: sent {:?}, oracle {:?}",
            String::from_utf8_lossy(&sent),
            String::from_utf8_lossy(&oracle.expected_commands)
        ));
    }
    let raised: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Frame { t, payload: FramePayload::Halt, direction: Direction::Uplink, .. } => Some(*t),
            _ => None,
        })
        .collect();
    if raised != oracle.predicted_halts {
        disagreements.push(format!("halts: raised {raised:?}, oracle {:?}", oracle.predicted_halts));
    }
    Ok(ReplayReport { oracle, recorded, disagreements })
}
