//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//!
//! Runs without the libtest harness so the lines always reach the output.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use htrack::evaluation::application::{apply_clearing_rule, validate_application, Application, Field, ValidationRules};
use htrack::evaluation::session::{
    transition, Action, FailReason, SessionStatus, TestSession, Transition, BANNER_ACTIVE, BANNER_READY,
    BANNER_SENSORS_MISALIGNED, BANNER_VEHICLE_HALT, TEST_FAILED, TEST_PASSED,
};
use htrack::eventlog::{Record, Verdict};
use htrack::link::{Direction, LinkParams};
use htrack::replay::replay_and_compare;
use htrack::sim::SimOptions;
use htrack::track::{beam_states, KnockedPosts, SensorId};
use htrack::zero_rpm::{ZeroRpmConfig, ZeroRpmUnit};

/// Random scenarios for the oracle-equivalence check.
const ORACLE_SCENARIOS: u64 = 500;
const ZERO_RPM_STREAMS: u64 = 1_000;
const GEOMETRY_CASES: usize = 1_000;
const APPLICATIONS: usize = 10_000;
const FUZZ_STEPS: usize = 10_000;
/// Random scenarios run over a lossy link.
const LOSSY_SCENARIOS: u64 = 200;
const LOSSY_DROP: f64 = 0.3;
/// Halt detection must land within one tick past the threshold.
const DT: f64 = 0.01;
const HALT_THRESHOLD: f64 = 1.0;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
type LabelledCase = (String, htrack::scenario::Scenario, SimOptions);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden_pass() -> Check {
    let (_, a) = run_default("golden-pass");
    ensure(a.gate_count == 8, || format!("gate count {}", a.gate_count))?;
    let cmds = a.downlink_commands();
    ensure(cmds == b"EDEDEDED", || format!("commands {:?}", String::from_utf8_lossy(&cmds)))?;
    ensure(a.verdict == Verdict::Passed, || format!("verdict {:?}", a.verdict))?;
    let stopped = a.log.records.iter().any(|r| matches!(r, Record::OperatorStop { .. }));
    ensure(stopped, || "no scripted STOP in the log".into())?;
    let first = a.log.to_jsonl();
    for _ in 0..2 {
        let (_, again) = run_default("golden-pass");
        ensure(again.log.to_jsonl() == first, || "event log differs between runs".into())?;
    }
    Ok(format!("count 8, commands EDEDEDED, {TEST_PASSED}, 3 identical logs of {} bytes", first.len()))
}

/// Time from the last encoder edge to the halt frame, for a failed halt run.
fn halt_gap(log: &htrack::eventlog::EventLog) -> Option<f64> {
    let halt_t = log.records.iter().find_map(|r| match r {
        Record::Frame { t, direction: Direction::Uplink, .. } => Some(*t),
        _ => None,
    })?;
    let last_edge = log.records.iter().rev().find_map(|r| match r {
        Record::Encoder { t, .. } if *t <= halt_t => Some(*t),
        _ => None,
    })?;
    Some(halt_t - last_edge)
}

/// Longest encoder silence between completed paths, i.e. at a non-zero even count.
fn longest_parked_gap(log: &htrack::eventlog::EventLog) -> f64 {
    let mut count = 0u8;
    let mut last_edge: Option<(f64, u8)> = None;
    let mut best = 0.0f64;
    for r in &log.records {
        match r {
            Record::Gate { count: c, .. } => count = *c,
            Record::Encoder { t, .. } => {
                if let Some((prev, c)) = last_edge {
                    if c > 0 && c % 2 == 0 && c == count {
                        best = best.max(t - prev);
                    }
                }
                last_edge = Some((*t, count));
            }
            _ => {}
        }
    }
    best
}

fn halt_rule() -> Check {
    let (_, long) = run_default("halt-1p05");
    ensure(
        long.verdict == Verdict::Failed && long.fail_reason == Some(FailReason::VehicleHalt),
        || format!("1.05 s stop gave {:?}/{:?}", long.verdict, long.fail_reason),
    )?;
    let (_, short) = run_default("halt-0p95");
    ensure(short.fail_reason.is_none() && short.verdict == Verdict::Passed, || {
        format!("0.95 s stop gave {:?}/{:?}", short.verdict, short.fail_reason)
    })?;
    let (_, parked) = run_default("parked-outside");
    let parked_gap = longest_parked_gap(&parked.log);
    ensure(parked_gap >= 5.0, || format!("parked scenario only idles {parked_gap:.2} s outside"))?;
    ensure(parked.fail_reason.is_none(), || format!("parked outside gave {:?}", parked.fail_reason))?;
    let (_, mid) = run_default("halt-1p5");
    ensure(mid.fail_reason == Some(FailReason::VehicleHalt), || format!("1.5 s stop gave {:?}", mid.fail_reason))?;

    let mut gaps = Vec::new();
    for out in [&long, &mid] {
        let gap = halt_gap(&out.log).ok_or("halt run has no halt frame")?;
        ensure(gap > HALT_THRESHOLD && gap <= HALT_THRESHOLD + DT + 1e-9, || {
            format!("halt raised {gap:.4} s after the last edge")
        })?;
        gaps.push(gap);
    }
    Ok(format!(
        "1.05 s FAILED(vehicle_halt), 0.95 s no failure, {parked_gap:.2} s parked outside no failure, detection gaps {gaps:.3?} s"
    ))
}

fn trounce_and_line() -> Check {
    let (s3, post) = run_default("trounce-s3");
    ensure(post.fail_reason == Some(FailReason::SensorsMisaligned), || format!("S3 clip gave {:?}", post.fail_reason))?;
    let s3_post = post.log.records.iter().any(|r| matches!(r, Record::Trounce { post, .. } if post.sensor == SensorId::new(3).unwrap()));
    ensure(s3_post, || "no trounce recorded on an S3 post".into())?;
    ensure(s3.banner() == BANNER_SENSORS_MISALIGNED, || format!("banner {:?}", s3.banner()))?;

    let (s7, beam) = run_default("beam-s7");
    ensure(beam.fail_reason == Some(FailReason::SensorsMisaligned), || format!("S7 crossing gave {:?}", beam.fail_reason))?;
    let s7_edge = beam.log.records.iter().any(|r| matches!(r, Record::Edge { sensor, .. } if sensor.number() == 7));
    let struck = beam.log.records.iter().any(|r| matches!(r, Record::Trounce { .. }));
    ensure(s7_edge && !struck, || format!("S7 edge {s7_edge}, posts struck {struck}"))?;
    ensure(s7.status_text() == TEST_FAILED, || format!("status {:?}", s7.status_text()))?;

    let dash = "\u{2013}";
    let expected: [(&str, String); 4] = [
        (BANNER_READY, format!("SYSTEM READY {dash} SENSORS MISALIGNED")),
        (BANNER_ACTIVE, format!("SYSTEM ACTIVE {dash} FILL IN CANDIDATE DETAILS")),
        (BANNER_SENSORS_MISALIGNED, format!("SENSORS MISALIGNED {dash} TEST FINISHED")),
        (BANNER_VEHICLE_HALT, format!("VEHICLE HALT {dash} TEST FINISHED")),
    ];
    for (actual, want) in &expected {
        ensure(actual.as_bytes() == want.as_bytes(), || format!("banner bytes differ: {actual:?}"))?;
        ensure(actual.as_bytes().windows(3).any(|w| w == [0xE2, 0x80, 0x93]), || format!("no en dash in {actual:?}"))?;
    }
    ensure(TEST_PASSED == "TEST PASSED" && TEST_FAILED == "TEST FAILED", || "verdict strings differ".into())?;
    Ok("S3 post struck and S7 beam crossed both FAILED(sensors_misaligned); 4 banners and 2 verdict strings byte-exact".into())
}

fn oracle_equivalence() -> Check {
    let mut verdicts = std::collections::BTreeMap::<String, usize>::new();
    let mut check = |label: &str, log: &htrack::eventlog::EventLog| -> Result<(), String> {
        let report = replay_and_compare(log).map_err(|e| format!("{label}: {e}"))?;
        ensure(report.agrees(), || format!("{label}: {:?}", report.disagreements))?;
        let key = match report.oracle.reason {
            Some(r) => format!("{:?}/{r}", report.oracle.verdict),
            None => format!("{:?}", report.oracle.verdict),
        };
        *verdicts.entry(key).or_default() += 1;
        Ok(())
    };
    for name in GOLDEN_SCENARIOS {
        let (_, out) = run_default(name);
        check(name, &out.log)?;
        let (_, strict) = run(&load_scenario(name), &LinkParams::ideal(), &strict_stop());
        check(&format!("{name} strict"), &strict.log)?;
    }
    for seed in 0..ORACLE_SCENARIOS {
        let case = random_case(seed);
        let (_, out) = run(&case.scenario, &case.link, &case.opts);
        check(&format!("random seed {seed}"), &out.log)?;
    }
    Ok(format!(
        "0 disagreements over {} golden runs and {ORACLE_SCENARIOS} random scenarios; verdict mix {verdicts:?}",
        GOLDEN_SCENARIOS.len() * 2
    ))
}

fn zero_rpm_equivalence() -> Check {
    let mut with_halts = 0;
    for seed in 0..ZERO_RPM_STREAMS {
        let stream = random_stream(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut unit = ZeroRpmUnit::new(ZeroRpmConfig {
            threshold: stream.threshold,
            restart_on_enable: stream.restart_on_enable,
        });
        let mut live = Vec::new();
        for (k, (edge, cmd)) in stream.ticks.iter().enumerate() {
            let t = (k + 1) as f64 * stream.dt;
            if *edge {
                unit.on_encoder_edge(t);
            }
            if let Some(h) = unit.tick(t) {
                live.push(h.t);
            }
            if let Some(b) = cmd {
                unit.on_command(*b, t);
            }
        }
        let naive = naive_halts(&stream);
        let same = live.len() == naive.len() && live.iter().zip(&naive).all(|(a, b)| (a - b).abs() <= stream.dt + 1e-9);
        ensure(same, || format!("stream {seed}: detector {live:?}, gap scan {naive:?}"))?;
        with_halts += usize::from(!naive.is_empty());
    }
    Ok(format!("{ZERO_RPM_STREAMS} streams agree ({with_halts} with at least one halt)"))
}

fn geometry_oracle() -> Check {
    let layout = default_layout();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e0);
    let (mut accepted, mut skipped, mut occluded) = (0, 0, 0);
    while accepted < GEOMETRY_CASES {
        let rect = random_footprint(&mut rng);
        let sampled: Option<Vec<bool>> =
            layout.beams.iter().map(|b| sampled_occlusion(&rect, &b.segment).map(|o| !o)).collect();
        let Some(expected_clear) = sampled else {
            skipped += 1;
            continue;
        };
        let snap = beam_states(&layout, Some(&rect), &KnockedPosts::new());
        ensure(snap.clear.as_slice() == expected_clear.as_slice(), || {
            format!("footprint {rect:?}: clear {:?}, sampled {expected_clear:?}", snap.clear)
        })?;
        occluded += expected_clear.iter().filter(|c| !**c).count();
        accepted += 1;
    }
    Ok(format!(
        "{GEOMETRY_CASES} footprints x 12 beams match 1 mm sampling ({occluded} occlusions, {skipped} grazing cases skipped)"
    ))
}

/// The first entry of each pool is valid and drawn most of the time.
fn random_text(rng: &mut ChaCha8Rng, pool: &[&str]) -> String {
    if rng.gen_bool(0.75) {
        return pool[0].to_string();
    }
    pool[rng.gen_range(0..pool.len())].to_string()
}

fn random_application(rng: &mut ChaCha8Rng) -> Application {
    Application {
        first_name: random_text(rng, &["Anu", "", "  ", "Ravi", "Lakshmi"]),
        middle_name: random_text(rng, &["", "Mary", " ", "K"]),
        last_name: random_text(rng, &["Joseph", "", "Nair", "\t"]),
        address: random_text(rng, &["12 Temple Road", "", "Flat 3, MG Road, Kochi"]),
        pin_code: random_text(rng, &["686101", "6861", "686 01", "068610", "1234567", "", "68610a", "110001"]),
        date_of_birth: random_text(
            rng,
            &["1999-03-14", "2006-06-01", "2006-06-02", "2030-01-01", "1999-02-30", "14-03-1999", "", "1950-12-31"],
        ),
        gender: random_text(rng, &["female", "MALE", "Other", "f", "", "unknown"]),
    }
}

fn validation_clearing() -> Check {
    let today = NaiveDate::from_ymd_opt(2024, 6, 1).unwrap();
    let rules = ValidationRules::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa991);
    let (mut valid, mut multi) = (0, 0);
    for i in 0..APPLICATIONS {
        let app = random_application(&mut rng);
        let report = validate_application(&app, today, &rules);
        let cleared = apply_clearing_rule(&app, &report);
        for field in Field::ALL {
            let flagged = report.flags(field);
            let kept = cleared.field(field) == app.field(field);
            ensure(if flagged { cleared.field(field).is_empty() } else { kept }, || {
                format!("application {i}: {field:?} flagged={flagged}, cleared to {:?}", cleared.field(field))
            })?;
        }
        ensure(report.valid == report.field_errors.is_empty(), || format!("application {i}: valid flag inconsistent"))?;
        let popup = report.popup_text();
        for e in &report.field_errors {
            ensure(popup.contains(&format!("- {}: {}", e.field.label(), e.reason)), || {
                format!("application {i}: pop-up misses {:?}", e)
            })?;
        }
        ensure(popup.lines().filter(|l| l.starts_with("- ")).count() == report.field_errors.len(), || {
            format!("application {i}: pop-up line count")
        })?;
        valid += usize::from(report.valid);
        multi += usize::from(report.field_errors.len() > 1);
    }
    Ok(format!("{APPLICATIONS} applications: clearing matches flags; {valid} valid, {multi} with several errors all listed"))
}

/// The lifecycle table, written out independently of the implementation.
fn declared(status: SessionStatus, action: Action) -> Transition {
    use Action::*;
    use SessionStatus::*;
    let table: [(SessionStatus, [Transition; 7]); 6] = {
        use Transition::{Ignored as I, Rejected as R, Stay as S};
        let m = Transition::Moved;
        // Columns: aligned, misaligned, submit, cancel, start, fail, stop.
        [
            (Ready, [m(Active), S, R, R, R, I, R]),
            (Active, [S, m(Ready), m(Registered), S, R, I, R]),
            (Registered, [S, S, R, R, m(Running), I, R]),
            (Running, [S, S, R, R, R, m(Failed), m(Passed)]),
            (Passed, [S, S, R, R, R, I, R]),
            (Failed, [S, S, R, R, R, I, R]),
        ]
    };
    let col = [SensorsAligned, SensorsMisaligned, Submit, Cancel, Start, Fail, Stop]
        .iter()
        .position(|a| *a == action)
        .unwrap();
    table.iter().find(|(s, _)| *s == status).unwrap().1[col]
}

fn state_machine() -> Check {
    let mut pairs = 0;
    for status in SessionStatus::ALL {
        for action in Action::ALL {
            let got = transition(status, action);
            ensure(got == declared(status, action), || format!("{status:?} x {action:?}: {got:?}"))?;
            pairs += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xf5);
    let mut status = SessionStatus::Ready;
    let mut terminal_steps = 0;
    let mut session = TestSession::register("fuzz", Application::default(), fixed_clock());
    for step in 0..FUZZ_STEPS {
        let action = Action::ALL[rng.gen_range(0..Action::ALL.len())];
        let before = status;
        if let Transition::Moved(to) = transition(status, action) {
            status = to;
        }
        ensure(!before.is_terminal() || status == before, || format!("step {step}: left {before:?} via {action:?}"))?;

        let was = (session.status, session.fail_reason);
        match action {
            Action::Start => {
                let _ = session.start();
            }
            Action::Fail => {
                session.record_failure(FailReason::VehicleHalt, step as f64, None);
            }
            Action::Stop => {
                let _ = session.stop(step as f64, Default::default(), None);
            }
            _ => {}
        }
        ensure(!was.0.is_terminal() || (session.status, session.fail_reason) == was, || {
            format!("step {step}: session left {:?} via {action:?}", was.0)
        })?;
        terminal_steps += usize::from(status.is_terminal());
        if rng.gen_bool(0.02) {
            status = SessionStatus::Ready;
            session = TestSession::register("fuzz", Application::default(), fixed_clock());
        }
    }
    Ok(format!("{pairs} pairs match the table; {FUZZ_STEPS}-step fuzz, {terminal_steps} steps in a terminal state, none left"))
}

fn link_transparency() -> Check {
    let mut runs = 0;
    let mut frames = 0;
    let ideal = LinkParams::ideal();
    let mut check_ideal = |label: &str, opts: &SimOptions, sc: &htrack::scenario::Scenario| -> Result<(), String> {
        let (_, out) = run(sc, &ideal, opts);
        for dir in [Direction::Downlink, Direction::Uplink] {
            let (sent, got) = bytes(&out.log, dir);
            ensure(sent == got, || format!("{label} {dir:?}: sent {sent:?}, received {got:?}"))?;
            frames += sent.len();
        }
        runs += 1;
        Ok(())
    };
    for name in GOLDEN_SCENARIOS {
        check_ideal(name, &SimOptions::default(), &load_scenario(name))?;
    }
    for seed in 0..ORACLE_SCENARIOS {
        let case = random_case(seed);
        check_ideal(&format!("random seed {seed}"), &case.opts, &case.scenario)?;
    }

    let mut lossy_frames = 0;
    let mut dropped = 0;
    let mut lossy: Vec<LabelledCase> = Vec::new();
    for name in GOLDEN_SCENARIOS {
        lossy.push((name.to_string(), load_scenario(name), SimOptions::default()));
    }
    for seed in 0..LOSSY_SCENARIOS {
        let case = random_case(seed);
        lossy.push((format!("random seed {seed}"), case.scenario, case.opts));
    }
    for (i, (label, scenario, opts)) in lossy.iter().enumerate() {
        let link = LinkParams { drop_probability: LOSSY_DROP, seed: i as u64, jitter: 0.02, ..LinkParams::ideal() };
        let result = std::panic::catch_unwind(|| run(scenario, &link, opts));
        let (_, out) = result.map_err(|_| format!("lossy {label} panicked"))?;
        frame_conservation(&out.log).map_err(|e| format!("lossy {label}: {e}"))?;
        for r in &out.log.records {
            if let Record::Frame { fate, .. } = r {
                lossy_frames += 1;
                dropped += usize::from(*fate == htrack::link::Fate::Dropped);
            }
        }
    }
    Ok(format!(
        "{runs} ideal runs, {frames} frames byte-identical; {} runs at drop={LOSSY_DROP}: {lossy_frames} frames all accounted for ({dropped} dropped)",
        lossy.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("golden pass scenario", golden_pass),
        ("halt rule", halt_rule),
        ("trounce and line-cross rule", trounce_and_line),
        ("oracle equivalence", oracle_equivalence),
        ("zero-rpm brute-force equivalence", zero_rpm_equivalence),
        ("geometry oracle", geometry_oracle),
        ("validation and clearing", validation_clearing),
        ("state-machine exhaustion", state_machine),
        ("ideal-link transparency", link_transparency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let line = match check() {
            Ok(detail) => format!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                format!("FAIL {name}: {reason}")
            }
        };
        println!("{line} [{:.1} s]", started.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
