use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{Local, NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use htrack::evaluation::application::{validate_application, Application, ValidationRules};
use htrack::evaluation::card::render_result_card;
use htrack::evaluation::session::StopPolicy;
use htrack::eventlog::{EventLog, Verdict};
use htrack::http::{self, ServeConfig};
use htrack::link::LinkParams;
use htrack::replay::replay_and_compare;
use htrack::scenario::parse_scenario;
use htrack::sim::{run_scripted, SimOptions, DEFAULT_DT};
use htrack::track::{build_track, TrackConfig, TrackLayout};

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "htrack", version, about = "H-track driving test simulator and evaluation service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted scenario and write its event log and result card.
    Run(RunArgs),
    /// Re-derive the verdict of an event log and compare with the recorded one.
    Replay {
        log: PathBuf,
    },
    /// Check a candidate application file.
    Validate {
        application: PathBuf,
        /// Reference date for the age check (YYYY-MM-DD); defaults to today.
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Serve the HTTP API and live feed for the operator console.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SimFlags {
    /// Track config (TOML); defaults to the built-in H track.
    #[arg(long)]
    track: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation step, seconds.
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    /// One-way link latency, seconds.
    #[arg(long, default_value_t = 0.0)]
    link_latency: f64,
    /// Uniform extra latency in [0, jitter), seconds.
    #[arg(long, default_value_t = 0.0)]
    link_jitter: f64,
    /// Probability that a frame is lost.
    #[arg(long, default_value_t = 0.0)]
    link_drop: f64,
    /// Allow frames to overtake each other under jitter.
    #[arg(long)]
    link_reorder: bool,
    /// Seed for the link's loss and jitter draws.
    #[arg(long, default_value_t = 0)]
    link_seed: u64,
    /// STOP before the eighth gate crossing fails the test.
    #[arg(long)]
    strict_stop: bool,
    /// Gate crossings out of the canonical order are ignored.
    #[arg(long)]
    strict_order: bool,
}

impl SimFlags {
    fn layout(&self) -> anyhow::Result<TrackLayout> {
        let config = match &self.track {
            Some(path) => TrackConfig::from_toml_str(&read(path)?).with_context(|| format!("track {}", path.display()))?,
            None => TrackConfig::default(),
        };
        Ok(build_track(&config)?)
    }

    fn link(&self) -> anyhow::Result<LinkParams> {
        let params = LinkParams {
            base_latency: self.link_latency,
            jitter: self.link_jitter,
            drop_probability: self.link_drop,
            seed: self.link_seed,
            in_order: !self.link_reorder,
        };
        params.validate()?;
        Ok(params)
    }

    fn options(&self) -> anyhow::Result<SimOptions> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            bail!("--dt must be positive, got {}", self.dt);
        }
        let mut opts = SimOptions { dt: self.dt, ..SimOptions::default() };
        opts.stop_policy = StopPolicy { strict: self.strict_stop };
        opts.central.strict_order = self.strict_order;
        Ok(opts)
    }
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[command(flatten)]
    sim: SimFlags,
    /// Output directory for the event log and result card.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Candidate application (TOML) printed on the result card.
    #[arg(long)]
    application: Option<PathBuf>,
    /// Fixed card timestamp (YYYY-MM-DDTHH:MM:SS) for reproducible output.
    #[arg(long)]
    clock: Option<NaiveDateTime>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Session store directory.
    #[arg(long, default_value = "store")]
    store: PathBuf,
    /// Scenario driven when a session is started.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Simulated seconds per wall-clock second; 0 runs as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pace: f64,
    /// Start with these monitoring sensors knocked out of line, e.g. S5.
    #[arg(long)]
    knock: Vec<String>,
    #[command(flatten)]
    sim: SimFlags,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn summary(value: serde_json::Value) {
    println!("{value}");
}

fn cmd_run(args: RunArgs) -> anyhow::Result<u8> {
    let scenario = parse_scenario(&read(&args.scenario)?).with_context(|| format!("scenario {}", args.scenario.display()))?;
    let mut scenario = scenario;
    if let Some(seed) = args.sim.seed {
        scenario.seed = seed;
    }
    let layout = args.sim.layout()?;
    let link = args.sim.link()?;
    let opts = args.sim.options()?;
    let application = match &args.application {
        Some(path) => Application::from_toml_str(&read(path)?).with_context(|| format!("application {}", path.display()))?,
        None => Application::default(),
    };
    let clock = args.clock.unwrap_or_else(|| Local::now().naive_local());

    let (mut session, outcome) = run_scripted(&layout, &scenario, &link, &opts, &scenario.name, application, clock)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let log_path = args.out.join(format!("{}.jsonl", scenario.name));
    fs::write(&log_path, outcome.log.to_jsonl()).with_context(|| format!("cannot write {}", log_path.display()))?;
    session.event_log = Some(log_path.display().to_string());

    let card_path = args.out.join(format!("{}.card.txt", scenario.name));
    match render_result_card(&session, clock) {
        Ok(card) => fs::write(&card_path, card).with_context(|| format!("cannot write {}", card_path.display()))?,
        Err(e) => log::info!("no result card: {e}"),
    }

    println!("{}", session.status_text());
    if outcome.fail_reason.is_some() {
        println!("{}", session.banner());
    }
    for w in &session.warnings {
        println!("warning: {w}");
    }
    let code = if outcome.verdict == Verdict::Passed { EXIT_PASS } else { EXIT_FAIL };
    summary(json!({
        "schema": "htrack-run/1",
        "scenario": scenario.name,
        "verdict": outcome.verdict,
        "reason": outcome.fail_reason,
        "gate_count": outcome.gate_count,
        "end_t": outcome.end_t,
        "warnings": session.warnings,
        "log": log_path,
        "exit_code": code,
    }));
    Ok(code)
}

fn cmd_replay(path: &Path) -> anyhow::Result<u8> {
    let log = EventLog::from_jsonl(&read(path)?)?;
    let report = replay_and_compare(&log)?;
    let o = &report.oracle;
    match o.reason {
        Some(reason) => println!("oracle: {:?} ({reason}) at t={}", o.verdict, o.t),
        None => println!("oracle: {:?} at t={}", o.verdict, o.t),
    }
    match &report.recorded {
        Some(_) if report.agrees() => println!("agrees with the recorded verdict"),
        Some(_) => {
            for d in &report.disagreements {
                println!("disagreement: {d}");
            }
        }
        None => println!("log has no recorded verdict to compare"),
    }
    let compared = report.recorded.is_some();
    let code = if !compared || report.agrees() { EXIT_PASS } else { EXIT_FAIL };
    summary(json!({
        "schema": "htrack-replay/1",
        "verdict": o.verdict,
        "reason": o.reason,
        "t": o.t,
        "gate_count": o.gate_count,
        "compared": compared,
        "agrees": report.agrees(),
        "disagreements": report.disagreements,
        "exit_code": code,
    }));
    Ok(code)
}

fn cmd_validate(path: &Path, today: Option<NaiveDate>) -> anyhow::Result<u8> {
    let app = Application::from_toml_str(&read(path)?).with_context(|| format!("application {}", path.display()))?;
    let today = today.unwrap_or_else(|| Local::now().date_naive());
    let report = validate_application(&app, today, &ValidationRules::default());
    print!("{}", report.popup_text());
    if report.valid {
        println!();
    }
    let code = if report.valid { EXIT_PASS } else { EXIT_FAIL };
    summary(json!({
        "schema": "htrack-validate/1",
        "valid": report.valid,
        "field_errors": report.field_errors,
        "exit_code": code,
    }));
    Ok(code)
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<u8> {
    let scenario = match &args.scenario {
        Some(p) => Some(parse_scenario(&read(p)?).with_context(|| format!("scenario {}", p.display()))?),
        None => None,
    };
    let config = ServeConfig {
        addr: args.addr.parse().with_context(|| format!("bad address {}", args.addr))?,
        store: args.store,
        layout: args.sim.layout()?,
        scenario,
        link: args.sim.link()?,
        sim: args.sim.options()?,
        pace: args.pace,
        knocked: args
            .knock
            .iter()
            .map(|s| s.parse().with_context(|| format!("bad sensor {s}")))
            .collect::<anyhow::Result<_>>()?,
    };
    http::serve_blocking(config)?;
    Ok(EXIT_PASS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay { log } => cmd_replay(&log),
        Command::Validate { application, today } => cmd_validate(&application, today),
        Command::Serve(args) => cmd_serve(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            summary(json!({ "schema": "htrack-error/1", "error": format!("{e:#}"), "exit_code": EXIT_CONFIG }));
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
