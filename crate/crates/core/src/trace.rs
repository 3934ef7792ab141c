//! Mission trace records and their line-oriented text form.
//!
//! Layout, in order:
//!
//! ```text
//! # keytour trace v1
//! # rng=chacha8 seed=7
//! # map=5x5 cell_size_cm=60.960
//! # keypoints=0:0 0:4 4:0
//! tick,row,col,heading_deg,lateral_offset_cm,drift_cm,compass_deg,range_cm,range_reliable,phase,command,events
//! 0,0,0,0.000,0.000,0.000,-,-,-,cruising,-,covered:0:0
//! 1,0,0,5.000,0.000,0.000,0.000,60.960,true,cruising,turn_right,-
//! ...
//! [summary]
//! success=true
//! ...
//! ```
//!
//! Floats carry three decimals. Cells inside fields are written `row:col`.
//! Tick 0 is the starting pose and has no reading or command (`-`).
//! Events are `;`-separated: `covered:R:C`, `resume`, `bump:R:C`,
//! `deferred:R:C` and `replan:R:C:BR:BC:COST` (`-` in place of `BR:BC`
//! when no cell was blocked for the replan).

use std::fmt::Write as _;

use thiserror::Error;

use crate::avoidance::PhaseKind;
use crate::map::Cell;
use crate::sim::{MissionFailure, MissionResult};

pub const TRACE_MAGIC: &str = "# keytour trace v1";
pub const TRACE_COLUMNS: &str = "tick,row,col,heading_deg,lateral_offset_cm,drift_cm,compass_deg,range_cm,range_reliable,phase,command,events";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is inconsistent with the scenario: {0}")]
    Inconsistent(String),
}

/// The single actuator command issued in a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    TurnLeft,
    TurnRight,
    Forward,
    Stop,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::TurnLeft => "turn_left",
            Command::TurnRight => "turn_right",
            Command::Forward => "forward",
            Command::Stop => "stop",
        }
    }

    pub fn from_label(s: &str) -> Option<Command> {
        [Command::TurnLeft, Command::TurnRight, Command::Forward, Command::Stop]
            .into_iter()
            .find(|c| c.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// First visit to a key point.
    Covered(Cell),
    /// The obstacle ahead cleared while waiting.
    Resume,
    /// Forward refused because the cell ahead was occupied.
    Bump(Cell),
    /// A scheduled obstacle was held back from the robot's cell.
    Deferred(Cell),
    Replan {
        from: Cell,
        blocked: Option<Cell>,
        cost: usize,
    },
}

impl TraceEvent {
    fn encode(&self) -> String {
        match self {
            TraceEvent::Covered(c) => format!("covered:{}", cell_field(*c)),
            TraceEvent::Resume => "resume".into(),
            TraceEvent::Bump(c) => format!("bump:{}", cell_field(*c)),
            TraceEvent::Deferred(c) => format!("deferred:{}", cell_field(*c)),
            TraceEvent::Replan { from, blocked, cost } => format!(
                "replan:{}:{}:{cost}",
                cell_field(*from),
                blocked.map_or("-".to_string(), cell_field)
            ),
        }
    }

    fn decode(s: &str) -> Option<TraceEvent> {
        let parts: Vec<&str> = s.split(':').collect();
        let cell = |r: &str, c: &str| Some(Cell::new(r.parse().ok()?, c.parse().ok()?));
        match parts.as_slice() {
            ["covered", r, c] => Some(TraceEvent::Covered(cell(r, c)?)),
            ["resume"] => Some(TraceEvent::Resume),
            ["bump", r, c] => Some(TraceEvent::Bump(cell(r, c)?)),
            ["deferred", r, c] => Some(TraceEvent::Deferred(cell(r, c)?)),
            ["replan", r, c, "-", cost] => Some(TraceEvent::Replan {
                from: cell(r, c)?,
                blocked: None,
                cost: cost.parse().ok()?,
            }),
            ["replan", r, c, br, bc, cost] => Some(TraceEvent::Replan {
                from: cell(r, c)?,
                blocked: Some(cell(br, bc)?),
                cost: cost.parse().ok()?,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample {
    pub distance_cm: f64,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub tick: u64,
    pub cell: Cell,
    pub heading_deg: f64,
    pub lateral_offset_cm: f64,
    pub drift_cm: f64,
    pub compass_deg: Option<f64>,
    pub range: Option<RangeSample>,
    pub phase: PhaseKind,
    pub command: Option<Command>,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub rng: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub cell_size_cm: f64,
    /// Origin first.
    pub keypoints: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub summary: MissionResult,
}

fn cell_field(c: Cell) -> String {
    format!("{}:{}", c.row, c.col)
}

/// Three decimals, with negative zero folded into zero.
pub fn fmt3(x: f64) -> String {
    let s = format!("{:.3}", x);
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn cells_field(cells: &[Cell]) -> String {
    cells.iter().map(|&c| cell_field(c)).collect::<Vec<_>>().join(" ")
}

impl MissionTrace {
    /// Every cell the robot occupied, in tick order, repeats collapsed.
    pub fn visited(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.cell) {
                out.push(r.cell);
            }
        }
        out
    }

    pub fn phases(&self) -> Vec<PhaseKind> {
        self.records.iter().map(|r| r.phase).collect()
    }

    /// Cells where a replan was issued.
    pub fn replan_cells(&self) -> Vec<Cell> {
        self.records
            .iter()
            .flat_map(|r| &r.events)
            .filter_map(|e| match e {
                TraceEvent::Replan { from, .. } => Some(*from),
                _ => None,
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(out, "{TRACE_MAGIC}");
        let _ = writeln!(out, "# rng={} seed={}", h.rng, h.seed);
        let _ = writeln!(out, "# map={}x{} cell_size_cm={}", h.rows, h.cols, fmt3(h.cell_size_cm));
        let _ = writeln!(out, "# keypoints={}", cells_field(&h.keypoints));
        let _ = writeln!(out, "{TRACE_COLUMNS}");
        for r in &self.records {
            let events = if r.events.is_empty() {
                "-".to_string()
            } else {
                r.events.iter().map(TraceEvent::encode).collect::<Vec<_>>().join(";")
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.tick,
                r.cell.row,
                r.cell.col,
                fmt3(r.heading_deg),
                fmt3(r.lateral_offset_cm),
                fmt3(r.drift_cm),
                r.compass_deg.map_or("-".into(), fmt3),
                r.range.map_or("-".into(), |s| fmt3(s.distance_cm)),
                r.range.map_or("-".into(), |s| s.reliable.to_string()),
                r.phase.label(),
                r.command.map_or("-", Command::label),
                events
            );
        }
        let s = &self.summary;
        let _ = writeln!(out, "[summary]");
        let _ = writeln!(out, "success={}", s.success);
        let _ = writeln!(out, "failure={}", s.failure.as_ref().map_or("none".into(), MissionFailure::encode));
        let _ = writeln!(out, "covered={}", cells_field(&s.covered));
        let _ = writeln!(out, "ended_at={}", cell_field(s.ended_at));
        let _ = writeln!(out, "planned_cost={}", s.planned_cost);
        let _ = writeln!(out, "executed_cost={}", s.executed_cost);
        let _ = writeln!(out, "wall_ticks={}", s.ticks);
        let _ = writeln!(out, "replans={}", s.replans);
        out
    }

    pub fn parse(text: &str) -> Result<MissionTrace, TraceError> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, message: String| TraceError::Malformed { line: line + 1, message };
        let expect_prefix = |i: usize, prefix: &str| -> Result<&str, TraceError> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(prefix))
                .ok_or_else(|| err(i, format!("expected `{prefix}`")))
        };

        if lines.first() != Some(&TRACE_MAGIC) {
            return Err(err(0, "missing trace header".into()));
        }
        let kv = |s: &str, i: usize| -> Result<Vec<(String, String)>, TraceError> {
            s.split_whitespace()
                .map(|tok| {
                    tok.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| err(i, format!("expected key=value, got `{tok}`")))
                })
                .collect()
        };
        let rng_line = kv(expect_prefix(1, "# ")?, 1)?;
        let map_line = kv(expect_prefix(2, "# ")?, 2)?;
        let get = |pairs: &[(String, String)], key: &str, i: usize| -> Result<String, TraceError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| err(i, format!("missing `{key}`")))
        };
        let rng = get(&rng_line, "rng", 1)?;
        let seed = get(&rng_line, "seed", 1)?
            .parse()
            .map_err(|_| err(1, "bad seed".into()))?;
        let dims = get(&map_line, "map", 2)?;
        let (rows, cols) = dims
            .split_once('x')
            .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
            .ok_or_else(|| err(2, format!("bad map size `{dims}`")))?;
        let cell_size_cm = get(&map_line, "cell_size_cm", 2)?
            .parse()
            .map_err(|_| err(2, "bad cell size".into()))?;
        let keypoints = parse_cells(expect_prefix(3, "# keypoints=")?).ok_or_else(|| err(3, "bad key points".into()))?;
        if lines.get(4) != Some(&TRACE_COLUMNS) {
            return Err(err(4, "missing column header".into()));
        }

        let mut records = Vec::new();
        let mut i = 5;
        while i < lines.len() && lines[i] != "[summary]" {
            records.push(parse_record(lines[i]).map_err(|m| err(i, m))?);
            i += 1;
        }
        if i >= lines.len() {
            return Err(err(i, "missing [summary] block".into()));
        }
        for (k, w) in records.windows(2).enumerate() {
            if w[1].tick != w[0].tick + 1 {
                return Err(err(5 + k + 1, "ticks must increase by one".into()));
            }
        }

        let mut summary: Vec<(String, String)> = Vec::new();
        for (j, line) in lines.iter().enumerate().skip(i + 1) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(j, format!("expected key=value, got `{line}`")))?;
            summary.push((k.to_string(), v.to_string()));
        }
        let at = i + 1;
        let num = |key: &str| -> Result<u64, TraceError> {
            get(&summary, key, at)?
                .parse()
                .map_err(|_| err(at, format!("bad `{key}`")))
        };
        let success = match get(&summary, "success", at)?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(err(at, format!("bad success flag `{other}`"))),
        };
        let failure = match get(&summary, "failure", at)?.as_str() {
            "none" => None,
            other => Some(MissionFailure::decode(other).ok_or_else(|| err(at, format!("bad failure `{other}`")))?),
        };
        let covered = parse_cells(&get(&summary, "covered", at)?).ok_or_else(|| err(at, "bad covered list".into()))?;
        let ended_at = parse_cell(&get(&summary, "ended_at", at)?).ok_or_else(|| err(at, "bad ended_at".into()))?;
        let result = MissionResult {
            success,
            failure,
            covered,
            ended_at,
            planned_cost: num("planned_cost")? as usize,
            executed_cost: num("executed_cost")? as usize,
            ticks: num("wall_ticks")?,
            replans: num("replans")? as usize,
        };
        Ok(MissionTrace {
            header: TraceHeader {
                rng,
                seed,
                rows,
                cols,
                cell_size_cm,
                keypoints,
            },
            records,
            summary: result,
        })
    }
}

fn parse_cell(s: &str) -> Option<Cell> {
    let (r, c) = s.split_once(':')?;
    Some(Cell::new(r.parse().ok()?, c.parse().ok()?))
}

fn parse_cells(s: &str) -> Option<Vec<Cell>> {
    s.split_whitespace().map(parse_cell).collect()
}

fn parse_record(line: &str) -> Result<TraceRecord, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 12 {
        return Err(format!("expected 12 fields, got {}", f.len()));
    }
    let float = |s: &str, name: &str| s.parse::<f64>().map_err(|_| format!("bad {name} `{s}`"));
    let opt_float = |s: &str, name: &str| if s == "-" { Ok(None) } else { float(s, name).map(Some) };
    let int = |s: &str, name: &str| s.parse::<u64>().map_err(|_| format!("bad {name} `{s}`"));
    let range = match (f[7], f[8]) {
        ("-", "-") => None,
        (d, r) => Some(RangeSample {
            distance_cm: float(d, "range_cm")?,
            reliable: r.parse().map_err(|_| format!("bad range_reliable `{r}`"))?,
        }),
    };
    let events = if f[11] == "-" {
        Vec::new()
    } else {
        f[11]
            .split(';')
            .map(|e| TraceEvent::decode(e).ok_or_else(|| format!("bad event `{e}`")))
            .collect::<Result<_, _>>()?
    };
    Ok(TraceRecord {
        tick: int(f[0], "tick")?,
        cell: Cell::new(int(f[1], "row")? as usize, int(f[2], "col")? as usize),
        heading_deg: float(f[3], "heading_deg")?,
        lateral_offset_cm: float(f[4], "lateral_offset_cm")?,
        drift_cm: float(f[5], "drift_cm")?,
        compass_deg: opt_float(f[6], "compass_deg")?,
        range,
        phase: PhaseKind::from_label(f[9]).ok_or_else(|| format!("bad phase `{}`", f[9]))?,
        command: match f[10] {
            "-" => None,
            s => Some(Command::from_label(s).ok_or_else(|| format!("bad command `{s}`"))?),
        },
        events,
    })
}
