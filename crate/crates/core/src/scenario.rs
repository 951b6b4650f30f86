//! Scripted driver scenarios and their line-oriented text format.
//!
//! ```text
//! htrack-scenario v1
//! name golden-pass
//! seed 7
//! duration 60
//! operator_stop_at 55.5
//! vehicle length=4 width=1.8 wheel_radius=0.25 pulses_per_rev=8
//! at 0 goto=1.5,-4,90 speed=4
//! at 6.5 steer=0.5
//! ```
//!
//! `#` starts a comment. Each `at` line is one timeline entry; `goto` places
//! the vehicle at `x,y` (metres) with an optional heading in degrees.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_HEADER: &str = "htrack-scenario v1";

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Semantic { field: String, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse { line, message: message.into() }
}

fn semantic(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub length: f64,
    pub width: f64,
    pub wheel_radius: f64,
    pub pulses_per_rev: u32,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self { length: 4.0, width: 1.8, wheel_radius: 0.25, pulses_per_rev: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    /// rad/s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goto: Option<Waypoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub operator_stop_at: Option<f64>,
    pub vehicle: VehicleSpec,
    pub timeline: Vec<TimelineEntry>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, duration: f64) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            duration,
            operator_stop_at: None,
            vehicle: VehicleSpec::default(),
            timeline: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty() || self.name.chars().any(char::is_whitespace) {
            return Err(semantic("name", "must be a single non-empty word"));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(semantic("duration", format!("must be >= 0, got {}", self.duration)));
        }
        if let Some(stop) = self.operator_stop_at {
            if !(stop >= 0.0) || !stop.is_finite() {
                return Err(semantic("operator_stop_at", format!("must be >= 0, got {stop}")));
            }
        }
        let v = &self.vehicle;
        for (field, value) in [("vehicle.length", v.length), ("vehicle.width", v.width), ("vehicle.wheel_radius", v.wheel_radius)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(semantic(field, format!("must be > 0, got {value}")));
            }
        }
        if v.pulses_per_rev < 1 {
            return Err(semantic("vehicle.pulses_per_rev", "must be >= 1"));
        }
        let mut prev: Option<f64> = None;
        for entry in &self.timeline {
            if !(entry.t >= 0.0) || !entry.t.is_finite() {
                return Err(semantic("timeline", format!("time {} must be >= 0", entry.t)));
            }
            if let Some(p) = prev {
                if entry.t <= p {
                    return Err(semantic("timeline", format!("time {} does not follow {}", entry.t, p)));
                }
            }
            prev = Some(entry.t);
            if let Some(speed) = entry.speed {
                if !(speed >= 0.0) || !speed.is_finite() {
                    return Err(semantic("speed", format!("must be >= 0 at t={}, got {speed}", entry.t)));
                }
            }
            if entry.steer.is_some_and(|s| !s.is_finite()) {
                return Err(semantic("steer", format!("must be finite at t={}", entry.t)));
            }
            if let Some(g) = entry.goto {
                if !g.x.is_finite() || !g.y.is_finite() || g.heading_deg.is_some_and(|h| !h.is_finite()) {
                    return Err(semantic("goto", format!("must be finite at t={}", entry.t)));
                }
            }
        }
        if let Some(last) = prev {
            if self.duration < last {
                return Err(semantic("duration", format!("{} is before last timeline time {last}", self.duration)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{FORMAT_HEADER}")?;
        writeln!(f, "name {}", self.name)?;
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "duration {}", self.duration)?;
        if let Some(stop) = self.operator_stop_at {
            writeln!(f, "operator_stop_at {stop}")?;
        }
        let v = &self.vehicle;
        writeln!(
            f,
            "vehicle length={} width={} wheel_radius={} pulses_per_rev={}",
            v.length, v.width, v.wheel_radius, v.pulses_per_rev
        )?;
        for e in &self.timeline {
            write!(f, "at {}", e.t)?;
            if let Some(g) = e.goto {
                write!(f, " goto={},{}", g.x, g.y)?;
                if let Some(h) = g.heading_deg {
                    write!(f, ",{h}")?;
                }
            }
            if let Some(speed) = e.speed {
                write!(f, " speed={speed}")?;
            }
            if let Some(steer) = e.steer {
                write!(f, " steer={steer}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ScenarioError> {
    raw.parse()
        .map_err(|_| parse_err(line, format!("{key}: cannot parse {raw:?} as a number")))
}

fn key_values(line: usize, tokens: &[&str]) -> Result<Vec<(String, String)>, ScenarioError> {
    tokens
        .iter()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(line, format!("expected key=value, got {tok:?}")))
        })
        .collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, raw)| (i + 1, raw.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        None => return Err(parse_err(1, "empty scenario")),
        Some((_, l)) if l == FORMAT_HEADER => {}
        Some((n, l)) => return Err(parse_err(n, format!("expected header {FORMAT_HEADER:?}, got {l:?}"))),
    }

    let mut name = None;
    let mut seed = None;
    let mut duration = None;
    let mut stop = None;
    let mut vehicle: Option<VehicleSpec> = None;
    let mut timeline = Vec::new();

    for (n, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (key, rest) = tokens.split_first().expect("non-empty line");
        let single = |rest: &[&str]| -> Result<String, ScenarioError> {
            match rest {
                [v] => Ok((*v).to_string()),
                _ => Err(parse_err(n, format!("{key} takes exactly one value"))),
            }
        };
        let once = |seen: bool| if seen { Err(parse_err(n, format!("duplicate {key}"))) } else { Ok(()) };
        match *key {
            "name" => {
                once(name.is_some())?;
                name = Some(single(rest)?);
            }
            "seed" => {
                once(seed.is_some())?;
                seed = Some(number::<u64>(n, key, &single(rest)?)?);
            }
            "duration" => {
                once(duration.is_some())?;
                duration = Some(number::<f64>(n, key, &single(rest)?)?);
            }
            "operator_stop_at" => {
                once(stop.is_some())?;
                stop = Some(number::<f64>(n, key, &single(rest)?)?);
            }
            "vehicle" => {
                once(vehicle.is_some())?;
                let mut spec = VehicleSpec::default();
                for (k, v) in key_values(n, rest)? {
                    match k.as_str() {
                        "length" => spec.length = number(n, &k, &v)?,
                        "width" => spec.width = number(n, &k, &v)?,
                        "wheel_radius" => spec.wheel_radius = number(n, &k, &v)?,
                        "pulses_per_rev" => spec.pulses_per_rev = number(n, &k, &v)?,
                        other => return Err(parse_err(n, format!("unknown vehicle key {other:?}"))),
                    }
                }
                vehicle = Some(spec);
            }
            "at" => {
                let (t, kvs) = rest
                    .split_first()
                    .ok_or_else(|| parse_err(n, "at needs a time"))?;
                let mut entry = TimelineEntry { t: number(n, "at", t)?, ..Default::default() };
                let kvs = key_values(n, kvs)?;
                if kvs.is_empty() {
                    return Err(parse_err(n, "timeline entry has no controls"));
                }
                for (k, v) in kvs {
                    match k.as_str() {
                        "speed" if entry.speed.is_none() => entry.speed = Some(number(n, &k, &v)?),
                        "steer" if entry.steer.is_none() => entry.steer = Some(number(n, &k, &v)?),
                        "goto" if entry.goto.is_none() => {
                            let parts: Vec<&str> = v.split(',').collect();
                            let coords = parts
                                .iter()
                                .map(|p| number::<f64>(n, "goto", p))
                                .collect::<Result<Vec<_>, _>>()?;
                            entry.goto = Some(match coords[..] {
                                [x, y] => Waypoint { x, y, heading_deg: None },
                                [x, y, h] => Waypoint { x, y, heading_deg: Some(h) },
                                _ => return Err(parse_err(n, "goto takes x,y or x,y,heading_deg")),
                            });
                        }
                        "speed" | "steer" | "goto" => return Err(parse_err(n, format!("duplicate {k}"))),
                        other => return Err(parse_err(n, format!("unknown control {other:?}"))),
                    }
                }
                timeline.push(entry);
            }
            other => return Err(parse_err(n, format!("unknown key {other:?}"))),
        }
    }

    let scenario = Scenario {
        name: name.ok_or_else(|| semantic("name", "missing"))?,
        seed: seed.unwrap_or(0),
        duration: duration.ok_or_else(|| semantic("duration", "missing"))?,
        operator_stop_at: stop,
        vehicle: vehicle.unwrap_or_default(),
        timeline,
    };
    scenario.validate()?;
    Ok(scenario)
}
