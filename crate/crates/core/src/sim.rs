//! Fixed-step discrete-event loop tying vehicle, track, controllers, link
//! and session together.
//!
//! Order of work inside tick `k` (`t = k * dt`; tick 0 only initialises):
//!
//! 1. step the vehicle over `(t - dt, t]` and feed encoder edges to the unit
//! 2. apply scenario controls due at or before `t`
//! 3. trounce check, beam snapshot, falling edges
//! 4. monitoring edges and struck posts fail the session
//! 5. gating edges go to the central unit; commands go on the link
//! 6. the vehicle unit ticks; a halt goes on the link
//! 7. the link delivers everything due at `t`
//! 8. scripted or live operator stop
//!
//! The loop ends at the first verdict or at the scenario duration.

use std::f64::consts::FRAC_PI_2;

use chrono::NaiveDateTime;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::central::{CentralConfig, CentralController, GateOutcome};
use crate::evaluation::application::Application;
use crate::evaluation::session::{FailReason, SessionStatus, StopPolicy, TestSession};
use crate::eventlog::{EventLog, Record, RunHeader, UnitEvent, Verdict, LOG_VERSION};
use crate::geometry::Vec2;
use crate::link::{Direction, FramePayload, LinkError, LinkParams, WirelessLink};
use crate::scenario::{Scenario, ScenarioError};
use crate::track::{beam_states, check_trounce, diff_edges, BeamSnapshot, KnockedPosts, SensorId, SensorRole, TrackLayout};
use crate::vehicle::{step_vehicle, Control, Encoder, VehicleError, VehicleState};
use crate::zero_rpm::{CommandOutcome, HaltReport, ZeroRpmConfig, ZeroRpmUnit};

/// Default tick length, seconds.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("session must be running to simulate, it is {0}")]
    SessionNotRunning(SessionStatus),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub zero_rpm: ZeroRpmConfig,
    pub central: CentralConfig,
    pub stop_policy: StopPolicy,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            zero_rpm: ZeroRpmConfig::default(),
            central: CentralConfig::default(),
            stop_policy: StopPolicy::default(),
        }
    }
}

/// What an observer sees after each tick.
#[derive(Debug)]
pub struct TickFrame<'a> {
    pub tick: u64,
    pub t: f64,
    pub vehicle: &'a VehicleState,
    pub snapshot: &'a BeamSnapshot,
    pub gate_count: u8,
    pub session: &'a TestSession,
    pub lcd: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopControl {
    Continue,
    /// Operator pressed STOP.
    Stop,
}

/// Hook for live runs: receives every tick, may request an operator stop.
pub trait SimObserver {
    fn on_tick(&mut self, frame: &TickFrame<'_>) -> LoopControl;
}

impl SimObserver for () {
    fn on_tick(&mut self, _: &TickFrame<'_>) -> LoopControl {
        LoopControl::Continue
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub verdict: Verdict,
    pub fail_reason: Option<FailReason>,
    pub gate_count: u8,
    pub end_t: f64,
    pub log: EventLog,
}

impl SimOutcome {
    pub fn downlink_commands(&self) -> Vec<u8> {
        self.log.sent_bytes(Direction::Downlink)
    }
}

pub fn verdict_of(session: &TestSession) -> Verdict {
    match session.status {
        SessionStatus::Passed => Verdict::Passed,
        SessionStatus::Failed => Verdict::Failed,
        _ => Verdict::Undecided,
    }
}

/// First tick whose time is at or after `t`.
pub fn tick_at_or_after(t: f64, dt: f64) -> u64 {
    (t / dt - 1e-9).ceil().max(0.0) as u64
}

/// Seed for the link's random stream, mixing scenario and link seeds.
pub fn link_seed(scenario_seed: u64, link_seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);
    rng.next_u64() ^ link_seed
}

pub fn simulate(
    layout: &TrackLayout,
    scenario: &Scenario,
    link_params: &LinkParams,
    session: &mut TestSession,
    opts: &SimOptions,
) -> Result<SimOutcome, SimError> {
    simulate_with(layout, scenario, link_params, session, opts, &mut ())
}

struct Run<'a> {
    layout: &'a TrackLayout,
    log: EventLog,
    vehicle: VehicleState,
    control: Control,
    encoder: Encoder,
    unit: ZeroRpmUnit,
    central: CentralController,
    link: WirelessLink,
    knocked: KnockedPosts,
    prev: BeamSnapshot,
    lcd: String,
}

impl Run<'_> {
    fn fail(&mut self, session: &mut TestSession, reason: FailReason, t: f64) {
        session.record_failure(reason, t, None);
        if session.status == SessionStatus::Failed {
            self.log.push(Record::Session { t, status: SessionStatus::Failed, reason: Some(reason), warning: None });
        }
    }

    fn note_lcd(&mut self, t: f64) {
        let text = self.central.display_state();
        if text != self.lcd {
            self.log.push(Record::Lcd { t, text: text.clone() });
            self.lcd = text;
        }
    }

    fn send(&mut self, payload: FramePayload, direction: Direction, t: f64) -> Result<(), SimError> {
        let f = self.link.send(payload.as_byte(), direction, t)?;
        self.log.push(Record::Frame {
            t,
            seq: f.seq,
            payload: f.payload,
            direction: f.direction,
            deliver_t: f.deliver_t,
            fate: f.fate,
        });
        Ok(())
    }

    /// Steps 3-7 of the tick. Returns once the session has failed.
    fn sense_and_react(&mut self, session: &mut TestSession, t: f64) -> Result<(), SimError> {
        let footprint = self.vehicle.footprint();
        let struck: Vec<_> = check_trounce(self.layout, &footprint)
            .into_iter()
            .filter(|p| !self.knocked.contains(p))
            .collect();
        for post in &struck {
            self.knocked.insert(*post);
            self.log.push(Record::Trounce { t, post: *post });
        }
        let snap = beam_states(self.layout, Some(&footprint), &self.knocked);
        let edges = diff_edges(&self.prev, &snap, t);
        self.prev = snap;
        for e in &edges {
            self.log.push(Record::Edge { t, sensor: e.sensor, role: e.sensor.role() });
        }

        let line_crossed = edges.iter().any(|e| e.sensor.role() == SensorRole::Monitoring);
        if !struck.is_empty() || line_crossed {
            self.fail(session, FailReason::SensorsMisaligned, t);
            return Ok(());
        }

        for e in edges.iter().filter(|e| e.sensor.role() == SensorRole::Gating) {
            let r = self.central.on_gate_edge(e.sensor, t).expect("gating sensor");
            self.log.push(Record::Gate { t, sensor: e.sensor, outcome: r.outcome, count: r.count, command: r.command });
            if r.outcome == GateOutcome::Accepted {
                session.gate_count = r.count;
            }
            if let Some(cmd) = r.command {
                self.send(cmd, Direction::Downlink, t)?;
            }
            self.note_lcd(t);
        }

        if let Some(report) = self.unit.tick(t) {
            self.log.push(Record::Unit { t, event: UnitEvent::Halt });
            self.send(FramePayload::Halt, Direction::Uplink, report.t)?;
        }

        for f in self.link.poll(t) {
            self.log.push(Record::Rx { t, seq: f.seq, payload: f.payload, direction: f.direction });
            match f.direction {
                Direction::Downlink => {
                    let event = match self.unit.on_command(f.payload.as_byte(), t) {
                        CommandOutcome::Enabled => UnitEvent::Enabled,
                        CommandOutcome::Disabled => UnitEvent::Disabled,
                        CommandOutcome::Noise(_) => UnitEvent::Noise,
                    };
                    self.log.push(Record::Unit { t, event });
                }
                Direction::Uplink => {
                    if f.payload != FramePayload::Halt {
                        continue;
                    }
                    if let Some(relay) = self.central.on_halt_report(HaltReport { t: f.sent_t }) {
                        self.log.push(Record::Relay { t, halt_t: relay.t, anomaly: relay.anomaly });
                        self.note_lcd(t);
                        if session.status == SessionStatus::Running {
                            self.fail(session, FailReason::VehicleHalt, t);
                            return Ok(());
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn simulate_with(
    layout: &TrackLayout,
    scenario: &Scenario,
    link_params: &LinkParams,
    session: &mut TestSession,
    opts: &SimOptions,
    observer: &mut dyn SimObserver,
) -> Result<SimOutcome, SimError> {
    if session.status != SessionStatus::Running {
        return Err(SimError::SessionNotRunning(session.status));
    }
    let dt = opts.dt;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::BadStep(dt));
    }
    scenario.validate()?;

    let mut link_params = *link_params;
    let header = RunHeader {
        version: LOG_VERSION,
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        dt,
        duration: scenario.duration,
        operator_stop_at: scenario.operator_stop_at,
        vehicle: scenario.vehicle.clone(),
        halt_threshold: opts.zero_rpm.threshold,
        restart_on_enable: opts.zero_rpm.restart_on_enable,
        refractory: opts.central.refractory,
        strict_order: opts.central.strict_order,
        strict_stop: opts.stop_policy.strict,
        link: link_params,
    };
    link_params.seed = link_seed(scenario.seed, link_params.seed);

    let s9 = layout.beam(SensorId::new(9).expect("S9")).segment;
    let start = s9.at(0.5) - Vec2::new(0.0, 10.0);
    let spec = &scenario.vehicle;
    let central = CentralController::new(opts.central);
    let mut run = Run {
        layout,
        log: EventLog::default(),
        vehicle: VehicleState {
            position: start,
            heading: FRAC_PI_2,
            speed: 0.0,
            wheel_radius: spec.wheel_radius,
            length: spec.length,
            width: spec.width,
        },
        control: Control::default(),
        encoder: Encoder::new(spec.pulses_per_rev)?,
        unit: ZeroRpmUnit::new(opts.zero_rpm),
        lcd: central.display_state(),
        central,
        link: WirelessLink::new(link_params)?,
        knocked: KnockedPosts::new(),
        prev: beam_states(layout, None, &KnockedPosts::new()),
    };
    run.log.push(Record::Header(header));
    run.log.push(Record::Session { t: 0.0, status: SessionStatus::Running, reason: None, warning: None });
    run.log.push(Record::Lcd { t: 0.0, text: run.lcd.clone() });

    let last_tick = (scenario.duration / dt + 1e-9).floor() as u64;
    let stop_tick = scenario.operator_stop_at.map(|s| tick_at_or_after(s, dt));
    let mut next_control = 0usize;
    let mut t = 0.0;

    for tick in 0..=last_tick {
        t = tick as f64 * dt;

        if tick > 0 {
            run.vehicle = step_vehicle(&run.vehicle, &run.control, dt)?;
            let edges = run.encoder.edges(&run.vehicle, dt)?;
            if edges > 0 {
                run.log.push(Record::Encoder { t, edges });
                run.unit.on_encoder_edge(t);
            }
        }

        while let Some(entry) = scenario.timeline.get(next_control) {
            if tick_at_or_after(entry.t, dt) > tick {
                break;
            }
            if let Some(speed) = entry.speed {
                run.control.speed = speed;
            }
            if let Some(steer) = entry.steer {
                run.control.steer_rate = steer;
            }
            if let Some(g) = entry.goto {
                run.vehicle.position = Vec2::new(g.x, g.y);
                if let Some(h) = g.heading_deg {
                    run.vehicle.heading = h.to_radians();
                }
            }
            run.vehicle.speed = run.control.speed;
            run.log.push(Record::Control { t, speed: entry.speed, steer: entry.steer, goto: entry.goto });
            next_control += 1;
        }

        run.sense_and_react(session, t)?;
        if session.status != SessionStatus::Running {
            break;
        }

        let frame = TickFrame {
            tick,
            t,
            vehicle: &run.vehicle,
            snapshot: &run.prev,
            gate_count: run.central.count,
            session,
            lcd: run.lcd.clone(),
        };
        let live_stop = observer.on_tick(&frame) == LoopControl::Stop;
        if live_stop || stop_tick.is_some_and(|s| tick >= s) {
            run.log.push(Record::OperatorStop { t });
            let warnings_before = session.warnings.len();
            // A running session always accepts STOP.
            session.stop(t, opts.stop_policy, None).expect("running session accepts stop");
            run.log.push(Record::Session {
                t,
                status: session.status,
                reason: session.fail_reason,
                warning: session.warnings.get(warnings_before).cloned(),
            });
            break;
        }
    }

    for f in run.link.drain_in_flight() {
        run.log.push(Record::Expired { t, seq: f.seq });
    }
    let verdict = verdict_of(session);
    run.log.push(Record::End { t, verdict, reason: session.fail_reason, gate_count: run.central.count });

    Ok(SimOutcome {
        verdict,
        fail_reason: session.fail_reason,
        gate_count: run.central.count,
        end_t: t,
        log: run.log,
    })
}

/// Registers and starts a session for `application`, then runs the scenario
/// to completion. Headless runs use this.
pub fn run_scripted(
    layout: &TrackLayout,
    scenario: &Scenario,
    link_params: &LinkParams,
    opts: &SimOptions,
    session_id: &str,
    application: Application,
    created_at: NaiveDateTime,
) -> Result<(TestSession, SimOutcome), SimError> {
    let mut session = TestSession::register(session_id, application, created_at);
    session.start().expect("registered session starts");
    let outcome = simulate(layout, scenario, link_params, &mut session, opts)?;
    Ok((session, outcome))
}
