//! C interface to the simulator, replay oracle and application checks.
//!
//! Every function returns an [`HtStatus`]; on anything but `HT_STATUS_OK` the
//! message is available from [`ht_last_error`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Strings
//! returned by the library are released with [`ht_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chrono::{NaiveDate, NaiveDateTime};

use htrack::evaluation::application::{validate_application, Application, Field, ValidationRules};
use htrack::evaluation::session::{FailReason, StopPolicy};
use htrack::eventlog::{EventLog, Verdict};
use htrack::link::LinkParams;
use htrack::replay::replay_and_compare;
use htrack::scenario::{parse_scenario, Scenario};
use htrack::sim::{run_scripted, SimOptions, SimOutcome};
use htrack::track::{build_track, TrackConfig, TrackLayout};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed track, scenario, application or log text.
    Parse = 3,
    /// Well-formed input with values out of range.
    Invalid = 4,
    Simulation = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtVerdict {
    Passed = 0,
    Failed = 1,
    Undecided = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtFailReason {
    None = 0,
    SensorsMisaligned = 1,
    VehicleHalt = 2,
    IncompleteDrive = 3,
}

/// Link model; see `ht_link_ideal` for the lossless default.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HtLinkParams {
    pub base_latency: f64,
    pub jitter: f64,
    pub drop_probability: f64,
    pub seed: u64,
    pub in_order: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HtSimOptions {
    /// Simulation step in seconds; 0 selects the default.
    pub dt: f64,
    pub strict_stop: bool,
    pub strict_order: bool,
}

/// Opaque track layout.
pub struct HtTrack(TrackLayout);
/// Opaque parsed scenario.
pub struct HtScenario(Scenario);
/// Opaque result of one simulation run.
pub struct HtOutcome(SimOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

/// Runs `f`, turning errors and panics into a status and the last-error text.
fn guard(f: impl FnOnce() -> Result<(), (HtStatus, String)>) -> HtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HtStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            HtStatus::Internal
        }
    }
}

fn fail<E: std::fmt::Display>(status: HtStatus) -> impl FnOnce(E) -> (HtStatus, String) {
    move |e| (status, e.to_string())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HtStatus, String)> {
    if p.is_null() {
        return Err((HtStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (HtStatus, String)> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| (HtStatus::NullArgument, format!("{what} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NUL bytes removed").into_raw()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ht_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ht_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn ht_link_ideal() -> HtLinkParams {
    let p = LinkParams::ideal();
    HtLinkParams {
        base_latency: p.base_latency,
        jitter: p.jitter,
        drop_probability: p.drop_probability,
        seed: p.seed,
        in_order: p.in_order,
    }
}

#[no_mangle]
pub extern "C" fn ht_sim_options_default() -> HtSimOptions {
    let d = SimOptions::default();
    HtSimOptions { dt: d.dt, strict_stop: d.stop_policy.strict, strict_order: d.central.strict_order }
}

/// Built-in H track.
#[no_mangle]
pub extern "C" fn ht_track_default(out_track: *mut *mut HtTrack) -> HtStatus {
    guard(|| {
        let slot = out(out_track, "out_track")?;
        let layout = build_track(&TrackConfig::default()).map_err(fail(HtStatus::Invalid))?;
        *slot = Box::into_raw(Box::new(HtTrack(layout)));
        Ok(())
    })
}

/// Track from TOML configuration text.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ht_track_from_toml(toml: *const c_char, out_track: *mut *mut HtTrack) -> HtStatus {
    guard(|| {
        let slot = out(out_track, "out_track")?;
        let config = TrackConfig::from_toml_str(text(toml, "toml")?).map_err(fail(HtStatus::Parse))?;
        let layout = build_track(&config).map_err(fail(HtStatus::Invalid))?;
        *slot = Box::into_raw(Box::new(HtTrack(layout)));
        Ok(())
    })
}

/// # Safety
/// `track` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_track_free(track: *mut HtTrack) {
    if !track.is_null() {
        drop(Box::from_raw(track));
    }
}

/// Parses scenario text.
///
/// # Safety
/// `source` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ht_scenario_parse(source: *const c_char, out_scenario: *mut *mut HtScenario) -> HtStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let scenario = parse_scenario(text(source, "source")?).map_err(fail(HtStatus::Parse))?;
        *slot = Box::into_raw(Box::new(HtScenario(scenario)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_scenario_free(scenario: *mut HtScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a scenario to its verdict. `link` and `options` may be null for the
/// defaults.
///
/// # Safety
/// Handles must come from this library; struct pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ht_simulate(
    track: *const HtTrack,
    scenario: *const HtScenario,
    link: *const HtLinkParams,
    options: *const HtSimOptions,
    out_outcome: *mut *mut HtOutcome,
) -> HtStatus {
    guard(|| {
        let slot = out(out_outcome, "out_outcome")?;
        let track = track.as_ref().ok_or((HtStatus::NullArgument, "track is null".to_string()))?;
        let scenario = scenario.as_ref().ok_or((HtStatus::NullArgument, "scenario is null".to_string()))?;
        let link = link.as_ref().copied().unwrap_or_else(|| ht_link_ideal());
        let link = LinkParams {
            base_latency: link.base_latency,
            jitter: link.jitter,
            drop_probability: link.drop_probability,
            seed: link.seed,
            in_order: link.in_order,
        };
        link.validate().map_err(fail(HtStatus::Invalid))?;
        let o = options.as_ref().copied().unwrap_or_else(|| ht_sim_options_default());
        let mut opts = SimOptions::default();
        if o.dt != 0.0 {
            opts.dt = o.dt;
        }
        opts.stop_policy = StopPolicy { strict: o.strict_stop };
        opts.central.strict_order = o.strict_order;
        // The session only carries the verdict here; its timestamps are unused.
        let (_, outcome) = run_scripted(
            &track.0,
            &scenario.0,
            &link,
            &opts,
            &scenario.0.name,
            Application::default(),
            NaiveDateTime::default(),
        )
        .map_err(fail(HtStatus::Simulation))?;
        *slot = Box::into_raw(Box::new(HtOutcome(outcome)));
        Ok(())
    })
}

/// # Safety
/// `outcome` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_outcome_free(outcome: *mut HtOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

fn verdict_code(v: Verdict) -> HtVerdict {
    match v {
        Verdict::Passed => HtVerdict::Passed,
        Verdict::Failed => HtVerdict::Failed,
        Verdict::Undecided => HtVerdict::Undecided,
    }
}

fn reason_code(r: Option<FailReason>) -> HtFailReason {
    match r {
        None => HtFailReason::None,
        Some(FailReason::SensorsMisaligned) => HtFailReason::SensorsMisaligned,
        Some(FailReason::VehicleHalt) => HtFailReason::VehicleHalt,
        Some(FailReason::IncompleteDrive) => HtFailReason::IncompleteDrive,
    }
}

/// Verdict, failure reason, final gate count and verdict time of a run.
/// Any output pointer may be null.
///
/// # Safety
/// `outcome` must be a live handle; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ht_outcome_summary(
    outcome: *const HtOutcome,
    out_verdict: *mut HtVerdict,
    out_reason: *mut HtFailReason,
    out_gate_count: *mut u8,
    out_end_t: *mut f64,
) -> HtStatus {
    guard(|| {
        let o = &outcome.as_ref().ok_or((HtStatus::NullArgument, "outcome is null".to_string()))?.0;
        if let Some(v) = out_verdict.as_mut() {
            *v = verdict_code(o.verdict);
        }
        if let Some(r) = out_reason.as_mut() {
            *r = reason_code(o.fail_reason);
        }
        if let Some(c) = out_gate_count.as_mut() {
            *c = o.gate_count;
        }
        if let Some(t) = out_end_t.as_mut() {
            *t = o.end_t;
        }
        Ok(())
    })
}

/// Event log of a run as JSON lines. Free with `ht_string_free`.
///
/// # Safety
/// `outcome` must be a live handle; `out_jsonl` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_outcome_log(outcome: *const HtOutcome, out_jsonl: *mut *mut c_char) -> HtStatus {
    guard(|| {
        let slot = out(out_jsonl, "out_jsonl")?;
        let o = &outcome.as_ref().ok_or((HtStatus::NullArgument, "outcome is null".to_string()))?.0;
        *slot = into_c_string(o.log.to_jsonl());
        Ok(())
    })
}

/// Re-derives the verdict of a JSON-lines event log. `out_agrees` is set to
/// whether it matches the recorded end of the run (true when none is recorded).
///
/// # Safety
/// `jsonl` must be null or NUL-terminated; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ht_replay(
    jsonl: *const c_char,
    out_verdict: *mut HtVerdict,
    out_reason: *mut HtFailReason,
    out_agrees: *mut bool,
) -> HtStatus {
    guard(|| {
        let log = EventLog::from_jsonl(text(jsonl, "jsonl")?).map_err(fail(HtStatus::Parse))?;
        let report = replay_and_compare(&log).map_err(fail(HtStatus::Invalid))?;
        if let Some(v) = out_verdict.as_mut() {
            *v = verdict_code(report.oracle.verdict);
        }
        if let Some(r) = out_reason.as_mut() {
            *r = reason_code(report.oracle.reason);
        }
        if let Some(a) = out_agrees.as_mut() {
            *a = report.agrees();
        }
        Ok(())
    })
}

pub const HT_FIELD_FIRST_NAME: u32 = 1 << 0;
pub const HT_FIELD_MIDDLE_NAME: u32 = 1 << 1;
pub const HT_FIELD_LAST_NAME: u32 = 1 << 2;
pub const HT_FIELD_ADDRESS: u32 = 1 << 3;
pub const HT_FIELD_PIN_CODE: u32 = 1 << 4;
pub const HT_FIELD_DATE_OF_BIRTH: u32 = 1 << 5;
pub const HT_FIELD_GENDER: u32 = 1 << 6;

fn field_bit(f: Field) -> u32 {
    match f {
        Field::FirstName => HT_FIELD_FIRST_NAME,
        Field::MiddleName => HT_FIELD_MIDDLE_NAME,
        Field::LastName => HT_FIELD_LAST_NAME,
        Field::Address => HT_FIELD_ADDRESS,
        Field::PinCode => HT_FIELD_PIN_CODE,
        Field::DateOfBirth => HT_FIELD_DATE_OF_BIRTH,
        Field::Gender => HT_FIELD_GENDER,
    }
}

/// Checks an application given as TOML. `today` is `YYYY-MM-DD`.
/// `out_invalid_fields` receives a mask of `HT_FIELD_*` bits, 0 when valid;
/// `out_popup` (nullable) the operator pop-up text, freed with `ht_string_free`.
///
/// # Safety
/// String arguments must be null or NUL-terminated; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn ht_validate_application(
    toml: *const c_char,
    today: *const c_char,
    out_invalid_fields: *mut u32,
    out_popup: *mut *mut c_char,
) -> HtStatus {
    guard(|| {
        let mask = out(out_invalid_fields, "out_invalid_fields")?;
        let app = Application::from_toml_str(text(toml, "toml")?).map_err(fail(HtStatus::Parse))?;
        let today: NaiveDate = text(today, "today")?.parse().map_err(fail(HtStatus::Parse))?;
        let report = validate_application(&app, today, &ValidationRules::default());
        *mask = report.field_errors.iter().fold(0, |m, e| m | field_bit(e.field));
        if let Some(p) = out_popup.as_mut() {
            *p = into_c_string(report.popup_text());
        }
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
