//! Helpers shared by the integration tests: fixture loading, the independent
//! oracles, and seeded generators for random inputs.
#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use htrack::evaluation::application::Application;
use htrack::evaluation::session::{StopPolicy, TestSession};
use htrack::eventlog::{EventLog, Record};
use htrack::geometry::{OrientedRect, Segment, Vec2};
use htrack::link::{Direction, Fate, LinkParams};
use htrack::scenario::{parse_scenario, Scenario, TimelineEntry, VehicleSpec, Waypoint};
use htrack::sim::{run_scripted, SimOptions, SimOutcome};
use htrack::track::{build_track, TrackConfig, TrackLayout};

pub const GOLDEN_SCENARIOS: [&str; 8] = [
    "golden-pass",
    "halt-1p05",
    "halt-0p95",
    "halt-1p5",
    "parked-outside",
    "trounce-s3",
    "beam-s7",
    "early-stop",
];

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenario_path(name: &str) -> PathBuf {
    repo_root().join("scenarios").join(format!("{name}.scn"))
}

pub fn load_scenario(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenario_path(name)).expect("scenario fixture");
    parse_scenario(&text).expect("fixture parses")
}

pub fn default_layout() -> TrackLayout {
    build_track(&TrackConfig::default()).expect("default track")
}

pub fn fixed_clock() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 6, 1).unwrap().and_hms_opt(10, 0, 0).unwrap()
}

pub fn run(scenario: &Scenario, link: &LinkParams, opts: &SimOptions) -> (TestSession, SimOutcome) {
    run_scripted(&default_layout(), scenario, link, opts, &scenario.name, Application::default(), fixed_clock())
        .expect("simulation runs")
}

pub fn run_default(name: &str) -> (TestSession, SimOutcome) {
    run(&load_scenario(name), &LinkParams::ideal(), &SimOptions::default())
}

pub fn strict_stop() -> SimOptions {
    SimOptions { stop_policy: StopPolicy { strict: true }, ..SimOptions::default() }
}

// ---------------------------------------------------------------------------
// Geometry oracle: dense sampling of the beam against the rectangle.

pub const SAMPLE_STEP: f64 = 0.001;
pub const MIN_SAMPLES: usize = 1_000;
/// Cases whose deepest sample sits within this distance of the rectangle
/// boundary cannot be decided by sampling and are skipped.
pub const GRAZE_BAND: f64 = 0.002;

/// Signed depth of `p` inside `r`: positive inside, negative outside.
fn depth(r: &OrientedRect, p: Vec2) -> f64 {
    let axis = Vec2::from_angle(r.heading);
    let d = p - r.center;
    let along = r.length / 2.0 - d.dot(axis).abs();
    let across = r.width / 2.0 - d.dot(axis.perp()).abs();
    along.min(across)
}

/// `Some(occluded)` from 1 mm sampling (at least 1000 points), or `None` when the case grazes the
/// rectangle too closely for sampling to settle it.
pub fn sampled_occlusion(r: &OrientedRect, s: &Segment) -> Option<bool> {
    let len = s.length();
    let n = ((len / SAMPLE_STEP).ceil() as usize).max(MIN_SAMPLES);
    let deepest = (0..=n)
        .map(|i| depth(r, s.a + (s.b - s.a) * (i as f64 / n as f64)))
        .fold(f64::NEG_INFINITY, f64::max);
    if deepest.abs() <= GRAZE_BAND {
        None
    } else {
        Some(deepest > 0.0)
    }
}

/// Random footprint placed near a random point of the track area.
pub fn random_footprint(rng: &mut ChaCha8Rng) -> OrientedRect {
    let center = Vec2::new(rng.gen_range(-3.0..21.0), rng.gen_range(-3.0..15.0));
    OrientedRect::new(
        center,
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.gen_range(0.5..6.0),
        rng.gen_range(0.3..3.0),
    )
}

// ---------------------------------------------------------------------------
// Zero-RPM oracle: recompute the detector's decision at every tick from the
// whole history, with no incremental state.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamEvent {
    Edge,
    Command(u8),
}

/// One tick's inputs: encoder edge first, then the timer check, then any byte
/// delivered over the link.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub dt: f64,
    pub threshold: f64,
    pub restart_on_enable: bool,
    pub ticks: Vec<(bool, Option<u8>)>,
}

pub fn random_stream(rng: &mut ChaCha8Rng) -> Stream {
    let n = rng.gen_range(50..1500);
    // Edge density varies per stream so some have long gaps and some none.
    let p_edge = [0.0, 0.01, 0.05, 0.2, 0.6, 1.0][rng.gen_range(0..6)];
    let p_cmd = rng.gen_range(0.0..0.02);
    let mut quiet_until = 0;
    let ticks = (0..n)
        .map(|k| {
            if rng.gen_bool(0.005) {
                quiet_until = k + rng.gen_range(50..250);
            }
            let edge = k >= quiet_until && rng.gen_bool(p_edge);
            let cmd = rng.gen_bool(p_cmd).then(|| [b'E', b'E', b'D', b'x', 0u8][rng.gen_range(0..5)]);
            (edge, cmd)
        })
        .collect();
    Stream { dt: 0.01, threshold: 1.0, restart_on_enable: rng.gen_bool(0.7), ticks }
}

/// Halt times by direct gap scan.
pub fn naive_halts(stream: &Stream) -> Vec<f64> {
    let t_of = |k: usize| (k + 1) as f64 * stream.dt;
    let mut halts: Vec<f64> = Vec::new();
    for k in 0..stream.ticks.len() {
        let t = t_of(k);
        // Bytes read at earlier ticks decide the state at this check.
        let last_cmd = (0..k).rev().find_map(|j| match stream.ticks[j].1 {
            Some(b @ (b'E' | b'D')) => Some((j, b)),
            _ => None,
        });
        let Some((j, b'E')) = last_cmd else { continue };
        let enable_t = t_of(j);
        if halts.iter().any(|h| *h > enable_t) {
            continue;
        }
        let last_edge = (0..=k).rev().find(|i| stream.ticks[*i].0).map(t_of);
        let reference = match (stream.restart_on_enable, last_edge) {
            (true, Some(e)) => e.max(enable_t),
            (false, Some(e)) => e,
            (_, None) => enable_t,
        };
        if t - reference > stream.threshold + 1e-9 {
            halts.push(t);
        }
    }
    halts
}

// ---------------------------------------------------------------------------
// Random scenarios.

pub struct RandomCase {
    pub scenario: Scenario,
    pub link: LinkParams,
    pub opts: SimOptions,
}

fn entry(t: f64) -> TimelineEntry {
    TimelineEntry { t: (t * 100.0).round() / 100.0, ..Default::default() }
}

/// Drive along one leg with random stops, wobbles and teleports.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = rng.gen_range(3.0..30.0f64).round();
    let mut sc = Scenario::new(format!("random-{seed}"), duration);
    sc.seed = seed;
    sc.vehicle = VehicleSpec::default();
    if rng.gen_bool(0.7) {
        sc.operator_stop_at = Some((rng.gen_range(0.5..duration + 3.0) * 100.0).round() / 100.0);
    }
    let (x, y, h) = match rng.gen_range(0..4) {
        0 => (1.5, -4.0, 90.0),
        1 => (16.5, -4.0, 90.0),
        2 => (1.5, 16.0, -90.0),
        _ => (16.5, 16.0, -90.0),
    };
    let mut first = entry(0.0);
    first.goto = Some(Waypoint { x: x + rng.gen_range(-0.3..0.3), y, heading_deg: Some(h) });
    first.speed = Some(rng.gen_range(1.0..5.0));
    sc.timeline.push(first);
    let mut t = 0.0;
    while t < duration {
        t += rng.gen_range(0.2..3.0);
        let mut e = entry(t);
        if e.t <= sc.timeline.last().unwrap().t || e.t > duration {
            continue;
        }
        match rng.gen_range(0..10) {
            0..=2 => e.speed = Some(0.0),
            3..=5 => e.speed = Some(rng.gen_range(0.5..5.0)),
            6 | 7 => {
                e.steer = Some(rng.gen_range(-0.08..0.08));
            }
            8 => e.steer = Some(0.0),
            _ => {
                let (x, y, h) = match rng.gen_range(0..3) {
                    0 => (1.5, rng.gen_range(-6.0..18.0), [90.0, -90.0][rng.gen_range(0..2)]),
                    1 => (16.5, rng.gen_range(-6.0..18.0), [90.0, -90.0][rng.gen_range(0..2)]),
                    _ => (rng.gen_range(2.0..16.0), 6.0, 0.0),
                };
                e.goto = Some(Waypoint { x, y, heading_deg: Some(h) });
            }
        }
        sc.timeline.push(e);
    }
    sc.validate().expect("generated scenario is valid");
    sc
}

pub fn random_link(rng: &mut ChaCha8Rng) -> LinkParams {
    if rng.gen_bool(0.3) {
        return LinkParams::ideal();
    }
    LinkParams {
        base_latency: rng.gen_range(0.0..0.2),
        jitter: rng.gen_range(0.0..0.1),
        drop_probability: [0.0, 0.05, 0.3][rng.gen_range(0..3)],
        seed: rng.gen(),
        in_order: rng.gen_bool(0.5),
    }
}

pub fn random_case(seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut opts = SimOptions::default();
    opts.zero_rpm.restart_on_enable = rng.gen_bool(0.7);
    opts.central.strict_order = rng.gen_bool(0.2);
    opts.stop_policy.strict = rng.gen_bool(0.3);
    RandomCase { scenario: random_scenario(seed), link: random_link(&mut rng), opts }
}

// ---------------------------------------------------------------------------
// Link accounting.

/// Checks that every frame sent has exactly one fate and that delivered
/// frames are received at most once and no earlier than their delivery time.
pub fn frame_conservation(log: &EventLog) -> Result<(), String> {
    use std::collections::BTreeMap;
    let mut sent: BTreeMap<u64, (Fate, f64)> = BTreeMap::new();
    let mut received: BTreeMap<u64, usize> = BTreeMap::new();
    let mut expired: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &log.records {
        match r {
            Record::Frame { seq, fate, deliver_t, .. } => {
                if sent.insert(*seq, (*fate, *deliver_t)).is_some() {
                    return Err(format!("frame {seq} sent twice"));
                }
            }
            Record::Rx { t, seq, .. } => {
                let Some((fate, deliver_t)) = sent.get(seq) else { return Err(format!("frame {seq} received unsent")) };
                if *fate == Fate::Dropped {
                    return Err(format!("dropped frame {seq} was received"));
                }
                if *t + 1e-9 < *deliver_t {
                    return Err(format!("frame {seq} received before its delivery time"));
                }
                *received.entry(*seq).or_default() += 1;
            }
            Record::Expired { seq, .. } => *expired.entry(*seq).or_default() += 1,
            _ => {}
        }
    }
    for (seq, (fate, _)) in &sent {
        let fates = received.get(seq).copied().unwrap_or(0) + expired.get(seq).copied().unwrap_or(0);
        let expected = usize::from(*fate == Fate::Delivered);
        if fates != expected {
            return Err(format!("frame {seq} ({fate:?}) has {fates} outcomes"));
        }
    }
    Ok(())
}

pub fn bytes(log: &EventLog, dir: Direction) -> (Vec<u8>, Vec<u8>) {
    (log.sent_bytes(dir), log.received_bytes(dir))
}
