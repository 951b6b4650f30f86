//! Kinematic test vehicle and the wheel-mounted optical encoder.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedRect, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("pulses_per_rev must be at least 1")]
    NoPulses,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub speed: f64,
    pub wheel_radius: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(self.position, self.heading, self.length, self.width)
    }
}

/// Driver input held constant over a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// m/s, >= 0.
    pub speed: f64,
    /// rad/s, positive turns left.
    pub steer_rate: f64,
}

/// Advances the vehicle by `dt` under constant `control`.
///
/// Integration is exact for constant controls (straight line or circular
/// arc), so splitting a step into smaller ones lands on the same pose up to
/// rounding.
pub fn step_vehicle(state: &VehicleState, control: &Control, dt: f64) -> Result<VehicleState, VehicleError> {
    if !(dt > 0.0) {
        return Err(VehicleError::NonPositiveStep(dt));
    }
    if control.speed < 0.0 {
        return Err(VehicleError::NegativeSpeed(control.speed));
    }
    let v = control.speed;
    let w = control.steer_rate;
    let h0 = state.heading;
    let h1 = h0 + w * dt;
    let delta = if w.abs() < 1e-12 {
        Vec2::from_angle(h0) * (v * dt)
    } else {
        let r = v / w;
        Vec2::new(r * (h1.sin() - h0.sin()), -r * (h1.cos() - h0.cos()))
    };
    Ok(VehicleState {
        position: state.position + delta,
        heading: h1,
        speed: v,
        ..*state
    })
}

/// Optical encoder: `pulses_per_rev` falling edges per wheel revolution.
///
/// The fractional part of the accumulated phase carries across calls, so the
/// total edge count over a run is `floor(total revolutions * pulses_per_rev)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pulses_per_rev: u32,
    phase: f64,
    emitted: u64,
}

impl Encoder {
    pub fn new(pulses_per_rev: u32) -> Result<Self, VehicleError> {
        if pulses_per_rev < 1 {
            return Err(VehicleError::NoPulses);
        }
        Ok(Self { pulses_per_rev, phase: 0.0, emitted: 0 })
    }

    /// Falling edges produced while `state` travels for `dt`.
    pub fn edges(&mut self, state: &VehicleState, dt: f64) -> Result<u64, VehicleError> {
        if !(dt > 0.0) {
            return Err(VehicleError::NonPositiveStep(dt));
        }
        let revs = state.speed / (TAU * state.wheel_radius) * dt;
        self.phase += revs * f64::from(self.pulses_per_rev);
        // nudge absorbs accumulated rounding at exact integer phases
        let total = (self.phase + 1e-9).floor() as u64;
        let fresh = total - self.emitted;
        self.emitted = total;
        Ok(fresh)
    }

    pub fn total_edges(&self) -> u64 {
        self.emitted
    }

    /// Accumulated pulse phase (edges plus the fractional carry).
    pub fn phase(&self) -> f64 {
        self.phase
    }
}
