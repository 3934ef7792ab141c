//! `keytour` command-line runner.
//!
//! Exit codes: 0 success, 1 I/O, 2 parse error, 3 validation error,
//! 4 disconnected key point, 5 tick budget exceeded, 6 turn timeout,
//! 7 trace inconsistent with scenario, 64 bad command-line usage.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use keytour::map::Cell;
use keytour::render::{render_trace, RenderStyle};
use keytour::scenario::{load_scenario, LoadedScenario, Scenario, ScenarioError};
use keytour::sim::{plan_mission, run_mission, MissionFailure, MissionResult, Plan, SimError};
use keytour::tour::SaRecord;
use keytour::trace::{MissionTrace, TraceError};
use keytour::RNG_ALGORITHM;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "keytour", version, about = "Plan and simulate key-point coverage missions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Plan the key-point tour and report its legs and annealing convergence.
    Plan {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "KEYTOUR_OUT_DIR", default_value = "keytour-out")]
        out: PathBuf,
    },
    /// Run one mission and write its trace, result and rendering.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "KEYTOUR_OUT_DIR", default_value = "keytour-out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        render: Option<Style>,
    },
    /// Run a range of seeds in parallel and aggregate the outcomes.
    Batch {
        scenario: PathBuf,
        /// Seed range, `A..B` (B excluded) or `A..=B`.
        #[arg(long, value_parser = parse_seed_range)]
        seeds: SeedRange,
        #[arg(long, env = "KEYTOUR_OUT_DIR", default_value = "keytour-out")]
        out: PathBuf,
    },
    /// Render a trace file against its scenario.
    Render {
        trace: PathBuf,
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Style::Ascii)]
        style: Style,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Style {
    Ascii,
    Svg,
}

impl From<Style> for RenderStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Ascii => RenderStyle::Ascii,
            Style::Svg => RenderStyle::Svg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SeedRange {
    start: u64,
    end: u64,
}

fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected A..B or A..=B, got `{s}`"));
    };
    let start: u64 = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
    let end = if inclusive { b.checked_add(1).ok_or("range end too large")? } else { b };
    if end <= start {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(SeedRange { start, end })
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("key point {0} cannot be reached")]
    Disconnected(Cell),
    #[error("tick budget of {0} exhausted")]
    Budget(u64),
    #[error("heading not reached after {0} turn ticks")]
    TurnTimeout(u32),
    #[error("{0}")]
    Inconsistent(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Disconnected(_) => 4,
            CliError::Budget(_) => 5,
            CliError::TurnTimeout(_) => 6,
            CliError::Inconsistent(_) => 7,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            ScenarioError::Parse { .. } => CliError::Parse(e.to_string()),
            ScenarioError::Validation { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::DisconnectedKeyPoint(c) => CliError::Disconnected(c),
            SimError::InvalidScenario(m) => CliError::Validation(m),
            SimError::Tour(t) => CliError::Validation(t.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Malformed { .. } => CliError::Parse(e.to_string()),
            TraceError::Inconsistent(_) => CliError::Inconsistent(e.to_string()),
        }
    }
}

impl From<&MissionFailure> for CliError {
    fn from(f: &MissionFailure) -> Self {
        match *f {
            MissionFailure::DisconnectedKeyPoint(c) => CliError::Disconnected(c),
            MissionFailure::TickBudgetExceeded(n) => CliError::Budget(n),
            MissionFailure::TurnTimeout(n) => CliError::TurnTimeout(n),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn load(path: &Path) -> Result<LoadedScenario, CliError> {
    let loaded = load_scenario(path)?;
    eprint!("{}", loaded.summary());
    Ok(loaded)
}

#[derive(Serialize)]
struct Leg {
    from: usize,
    to: usize,
    from_cell: Cell,
    to_cell: Cell,
    cost: usize,
}

#[derive(Serialize)]
struct PlanFile<'a> {
    rng: &'static str,
    seed: u64,
    sa_seed: u64,
    keypoints: &'a [Cell],
    order: &'a [usize],
    legs: Vec<Leg>,
    total_cost: usize,
    identity_cost: usize,
    greedy_cost: usize,
    route: &'a [Cell],
    convergence: &'a [SaRecord],
}

fn plan_file(plan: &Plan, seed: u64) -> PlanFile<'_> {
    let points = plan.matrix.points();
    let legs = plan
        .run
        .tour
        .legs()
        .into_iter()
        .map(|(a, b)| Leg {
            from: a,
            to: b,
            from_cell: points[a],
            to_cell: points[b],
            cost: plan.matrix.get(a, b).unwrap_or(0),
        })
        .collect();
    PlanFile {
        rng: RNG_ALGORITHM,
        seed,
        sa_seed: plan.sa_seed,
        keypoints: points,
        order: &plan.run.tour.order,
        legs,
        total_cost: plan.run.tour.total_cost,
        identity_cost: plan.run.identity_cost,
        greedy_cost: plan.run.greedy_cost,
        route: &plan.route,
        convergence: &plan.run.history,
    }
}

fn write_plan(dir: &Path, plan: &Plan, seed: u64) -> Result<PathBuf, CliError> {
    let path = dir.join("plan.json");
    let json = serde_json::to_string_pretty(&plan_file(plan, seed)).expect("plan serializes");
    write_file(&path, json + "\n")?;
    Ok(path)
}

fn write_history(dir: &Path, history: &[SaRecord]) -> Result<PathBuf, CliError> {
    let path = dir.join("sa_history.csv");
    let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    for r in history {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}

fn cmd_plan(scenario: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let loaded = load(scenario)?;
    let plan = plan_mission(&loaded.scenario, seed)?;
    let tour = &plan.run.tour;
    let points = plan.matrix.points();
    let order: Vec<String> = tour.order.iter().chain(std::iter::once(&0)).map(|i| i.to_string()).collect();
    println!("order: {}", if tour.order.len() > 1 { order.join(" -> ") } else { "0".into() });
    for (a, b) in tour.legs() {
        println!(
            "leg {a} -> {b}: {} -> {} cost {}",
            points[a],
            points[b],
            plan.matrix.get(a, b).unwrap_or(0)
        );
    }
    println!("total: {}", tour.total_cost);
    println!(
        "identity: {}  greedy: {}  annealed: {}",
        plan.run.identity_cost, plan.run.greedy_cost, tour.total_cost
    );
    ensure_dir(out)?;
    let hist = write_history(out, &plan.run.history)?;
    let file = write_plan(out, &plan, seed)?;
    println!("annealing levels: {} (series in {})", plan.run.history.len(), hist.display());
    println!("plan written to {}", file.display());
    Ok(())
}

fn print_result(r: &MissionResult) {
    println!("success: {}", r.success);
    if let Some(f) = &r.failure {
        println!("failure: {f}");
    }
    let covered: Vec<String> = r.covered.iter().map(Cell::to_string).collect();
    println!("covered: {}", covered.join(" "));
    println!("ended at: {}", r.ended_at);
    println!("planned cost: {}  executed cost: {}", r.planned_cost, r.executed_cost);
    println!("ticks: {}  replans: {}", r.ticks, r.replans);
}

fn cmd_simulate(scenario: &Path, seed: u64, out: &Path, render: Option<Style>) -> Result<(), CliError> {
    let loaded = load(scenario)?;
    let run = run_mission(&loaded.scenario, seed)?;
    ensure_dir(out)?;
    write_file(&out.join("trace.txt"), run.trace.to_text())?;
    write_file(
        &out.join("result.json"),
        serde_json::to_string_pretty(&run.result).expect("result serializes") + "\n",
    )?;
    write_plan(out, &run.plan, seed)?;
    if let Some(style) = render {
        let doc = render_trace(&run.trace, &loaded.scenario, style.into())?;
        let name = match style {
            Style::Ascii => {
                print!("{doc}");
                "coverage.txt"
            }
            Style::Svg => "coverage.svg",
        };
        write_file(&out.join(name), doc)?;
    }
    print_result(&run.result);
    println!("trace written to {}", out.join("trace.txt").display());
    match &run.result.failure {
        Some(f) => Err(f.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct BatchRow {
    seed: u64,
    success: bool,
    failure: String,
    planned_cost: usize,
    executed_cost: usize,
    ticks: u64,
    replans: usize,
}

fn run_seed(scenario: &Scenario, seed: u64) -> Result<BatchRow, CliError> {
    let run = run_mission(scenario, seed)?;
    let r = run.result;
    Ok(BatchRow {
        seed,
        success: r.success,
        failure: r.failure.as_ref().map_or("none".into(), MissionFailure::encode),
        planned_cost: r.planned_cost,
        executed_cost: r.executed_cost,
        ticks: r.ticks,
        replans: r.replans,
    })
}

fn cmd_batch(scenario: &Path, seeds: SeedRange, out: &Path) -> Result<(), CliError> {
    let loaded = load(scenario)?;
    let rows: Vec<BatchRow> = (seeds.start..seeds.end)
        .into_par_iter()
        .map(|seed| run_seed(&loaded.scenario, seed))
        .collect::<Result<_, _>>()?;
    ensure_dir(out)?;
    let path = out.join("batch.csv");
    let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    for row in &rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let n = rows.len() as f64;
    let ok = rows.iter().filter(|r| r.success).count();
    let mean = |f: fn(&BatchRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let overhead: Vec<f64> = rows
        .iter()
        .filter(|r| r.success)
        .map(|r| r.executed_cost as f64 - r.planned_cost as f64)
        .collect();
    println!("missions: {}", rows.len());
    println!("succeeded: {ok} ({:.1}%)", 100.0 * ok as f64 / n);
    println!("mean planned cost: {:.3}", mean(|r| r.planned_cost as f64));
    println!("mean executed cost: {:.3}", mean(|r| r.executed_cost as f64));
    if !overhead.is_empty() {
        let max = overhead.iter().copied().fold(f64::MIN, f64::max);
        println!(
            "detour over plan (successful runs): mean {:.3}, max {max:.0}",
            overhead.iter().sum::<f64>() / overhead.len() as f64
        );
    }
    println!("mean ticks: {:.3}", mean(|r| r.ticks as f64));
    println!("mean replans: {:.3}", mean(|r| r.replans as f64));
    println!("results written to {}", path.display());
    match rows.iter().find(|r| !r.success) {
        Some(r) => Err(CliError::from(
            &MissionFailure::decode(&r.failure).expect("failure labels round-trip"),
        )),
        None => Ok(()),
    }
}

fn cmd_render(trace: &Path, scenario: &Path, style: Style, output: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(trace).map_err(|e| CliError::Io(format!("cannot read {}: {e}", trace.display())))?;
    let trace = MissionTrace::parse(&text)?;
    let loaded = load_scenario(scenario)?;
    let doc = render_trace(&trace, &loaded.scenario, style.into())?;
    match output {
        Some(path) => write_file(path, doc),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Cmd::Plan { scenario, seed, out } => cmd_plan(scenario, *seed, out),
        Cmd::Simulate {
            scenario,
            seed,
            out,
            render,
        } => cmd_simulate(scenario, *seed, out, *render),
        Cmd::Batch { scenario, seeds, out } => cmd_batch(scenario, *seeds, out),
        Cmd::Render {
            trace,
            scenario,
            style,
            output,
        } => cmd_render(trace, scenario, *style, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
