//! Central control unit: counts gating-beam interrupts, tells the on-vehicle
//! unit to enable (odd count, vehicle inside the H) or disable (even count),
//! and relays halt reports as test failures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::FramePayload;
use crate::track::{SensorId, SensorRole};
use crate::zero_rpm::HaltReport;

pub const FINAL_COUNT: u8 = 8;

/// Gate order of a clean four-path drive.
pub const CANONICAL_GATE_ORDER: [u8; 8] = [9, 10, 10, 12, 12, 11, 11, 12];

#[derive(Debug, Error, PartialEq)]
pub enum CentralError {
    #[error("{0} is a monitoring sensor; only S9..S12 are wired to the central unit")]
    NotGating(SensorId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralConfig {
    /// Seconds after an accepted edge during which further edges on the
    /// same sensor are treated as flicker.
    pub refractory: f64,
    /// Reject gate edges that deviate from [`CANONICAL_GATE_ORDER`].
    pub strict_order: bool,
}

impl Default for CentralConfig {
    fn default() -> Self {
        Self { refractory: 0.5, strict_order: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateOutcome {
    Accepted,
    Refractory,
    Saturated,
    OutOfOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateResponse {
    pub outcome: GateOutcome,
    pub count: u8,
    pub command: Option<FramePayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaltFailure {
    pub t: f64,
    /// Halt arrived while the count said the vehicle was outside.
    pub anomaly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralController {
    pub config: CentralConfig,
    pub count: u8,
    pub enabled_view: bool,
    pub last_cmd: Option<FramePayload>,
    /// Last accepted edge time per gating sensor, S9..S12.
    pub refractory: [Option<f64>; 4],
    pub halt_relayed: bool,
    pub accepted: Vec<SensorId>,
}

impl CentralController {
    pub fn new(config: CentralConfig) -> Self {
        Self {
            config,
            count: 0,
            enabled_view: false,
            last_cmd: None,
            refractory: [None; 4],
            halt_relayed: false,
            accepted: Vec::new(),
        }
    }

    pub fn on_gate_edge(&mut self, sensor: SensorId, t: f64) -> Result<GateResponse, CentralError> {
        if sensor.role() != SensorRole::Gating {
            return Err(CentralError::NotGating(sensor));
        }
        let slot = sensor.index() - 8;
        let respond = |outcome, count| GateResponse { outcome, count, command: None };

        if let Some(prev) = self.refractory[slot] {
            if t - prev <= self.config.refractory {
                return Ok(respond(GateOutcome::Refractory, self.count));
            }
        }
        if self.count >= FINAL_COUNT {
            log::warn!("gate edge on {sensor} at t={t} after drive complete; ignored");
            return Ok(respond(GateOutcome::Saturated, self.count));
        }
        if self.config.strict_order && CANONICAL_GATE_ORDER[usize::from(self.count)] != sensor.number() {
            log::warn!("gate edge on {sensor} at t={t} out of order at count {}", self.count);
            return Ok(respond(GateOutcome::OutOfOrder, self.count));
        }

        self.refractory[slot] = Some(t);
        self.count += 1;
        self.accepted.push(sensor);
        self.enabled_view = self.count % 2 == 1;
        let cmd = if self.enabled_view { FramePayload::Enable } else { FramePayload::Disable };
        self.last_cmd = Some(cmd);
        Ok(GateResponse { outcome: GateOutcome::Accepted, count: self.count, command: Some(cmd) })
    }

    /// First report becomes a failure; later ones are dropped.
    pub fn on_halt_report(&mut self, report: HaltReport) -> Option<HaltFailure> {
        if self.halt_relayed {
            return None;
        }
        self.halt_relayed = true;
        let anomaly = self.count.is_multiple_of(2);
        if anomaly {
            log::warn!("halt report at t={} while count {} is even", report.t, self.count);
        }
        Some(HaltFailure { t: report.t, anomaly })
    }

    /// Two-line LCD mirror.
    pub fn display_state(&self) -> String {
        if self.halt_relayed {
            return "VEHICLE HALT\nTEST FAILED".to_string();
        }
        match self.count {
            0 => "WAITING\nCOUNT 0".to_string(),
            FINAL_COUNT => format!("COUNT {FINAL_COUNT} OUTSIDE\nDRIVE COMPLETE"),
            n if n % 2 == 1 => format!("COUNT {n} INSIDE\nZERO RPM ON"),
            n => format!("COUNT {n} OUTSIDE\nZERO RPM OFF"),
        }
    }
}

impl Default for CentralController {
    fn default() -> Self {
        Self::new(CentralConfig::default())
    }
}
