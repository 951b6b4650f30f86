//! On-vehicle zero-RPM detector.
//!
//! Encoder falling edges are always recorded. While enabled, a gap of more
//! than `threshold` seconds since the last edge latches a single
//! [`HaltReport`]; the latch clears on the next enable.

use serde::{Deserialize, Serialize};

/// Slack for comparing tick-derived times against the threshold.
pub const TIME_EPS: f64 = 1e-9;

pub const ENABLE: u8 = b'E';
pub const DISABLE: u8 = b'D';

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaltReport {
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandOutcome {
    Enabled,
    Disabled,
    /// Unknown byte, state untouched.
    Noise(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroRpmConfig {
    /// Seconds without an edge before a halt is reported (strictly greater).
    pub threshold: f64,
    /// Whether an enable command restarts the gap timer.
    pub restart_on_enable: bool,
}

impl Default for ZeroRpmConfig {
    fn default() -> Self {
        Self { threshold: 1.0, restart_on_enable: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRpmUnit {
    pub config: ZeroRpmConfig,
    pub enabled: bool,
    pub last_edge_t: Option<f64>,
    pub enabled_since_t: Option<f64>,
    pub halt_latched: bool,
}

impl ZeroRpmUnit {
    pub fn new(config: ZeroRpmConfig) -> Self {
        Self {
            config,
            enabled: false,
            last_edge_t: None,
            enabled_since_t: None,
            halt_latched: false,
        }
    }

    pub fn on_command(&mut self, byte: u8, t: f64) -> CommandOutcome {
        match byte {
            ENABLE => {
                self.enabled = true;
                self.enabled_since_t = Some(t);
                self.halt_latched = false;
                if self.config.restart_on_enable {
                    self.last_edge_t = Some(t);
                }
                CommandOutcome::Enabled
            }
            DISABLE => {
                self.enabled = false;
                CommandOutcome::Disabled
            }
            other => {
                log::warn!("zero-rpm unit ignoring byte 0x{other:02x} at t={t}");
                CommandOutcome::Noise(other)
            }
        }
    }

    pub fn on_encoder_edge(&mut self, t: f64) {
        self.last_edge_t = Some(t);
    }

    pub fn tick(&mut self, t: f64) -> Option<HaltReport> {
        if !self.enabled || self.halt_latched {
            return None;
        }
        let reference = self.last_edge_t.or(self.enabled_since_t)?;
        if t - reference > self.config.threshold + TIME_EPS {
            self.halt_latched = true;
            Some(HaltReport { t })
        } else {
            None
        }
    }
}

impl Default for ZeroRpmUnit {
    fn default() -> Self {
        Self::new(ZeroRpmConfig::default())
    }
}
