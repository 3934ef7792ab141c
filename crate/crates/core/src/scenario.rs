//! Scenario files: everything a mission needs in one sectioned text file.
//!
//! ```text
//! # comments run to end of line
//! [map]
//! cell_size_cm = 60.96
//! 00000
//! 01110
//! 00000
//!
//! [keypoints]
//! origin = 0,0
//! 0,4
//! 2,4
//!
//! [bearings]
//! forward = 0
//! left = 270
//! backward = 180
//! right = 90
//!
//! [obstacles]
//! fixed 0,2 appear=5 disappear=40
//! moving 2,1@0 2,2@10 2,3@20 disappear=30
//!
//! [sa]
//! seed = 7
//! cooling_rate = 0.995
//! ```
//!
//! Only `[map]` and the origin are required. Other sections are
//! `key = value` lines: `[sa]`, `[control]`, `[ultrasonic]`, `[encoder]`,
//! `[drift]`, `[compass]`, `[motion]`, `[avoidance]` and `[mission]`.
//! Every omitted value takes its default and is listed in
//! [`LoadedScenario::defaults`].

use std::collections::BTreeMap;
use std::fmt::{self, Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::avoidance::AvoidanceConfig;
use crate::control::ControlConfig;
use crate::map::{parse_map, Cell, GridMap, KeyPointSet, MapError, Move, DEFAULT_CELL_SIZE_CM};
use crate::robot::{BearingConfig, RobotModels};
use crate::sim::{ObstacleEntry, ObstacleSchedule};
use crate::tour::SaConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("{entity}: {message}")]
    Validation { entity: String, message: String },
}

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn invalid(entity: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        entity: entity.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub map: GridMap,
    pub keypoints: KeyPointSet,
    pub bearings: BearingConfig,
    pub obstacles: ObstacleSchedule,
    pub sa: SaConfig,
    /// Pins the annealing seed; otherwise the run seed is used.
    pub sa_seed: Option<u64>,
    pub control: ControlConfig,
    pub models: RobotModels,
    pub avoidance: AvoidanceConfig,
    /// Defaults to 500 ticks per map cell.
    pub tick_budget: Option<u64>,
    /// Defaults to the forward bearing.
    pub initial_heading_deg: Option<f64>,
}

impl Scenario {
    /// A scenario with default models and no dynamic obstacles.
    pub fn new(map: GridMap, keypoints: KeyPointSet) -> Self {
        Self {
            map,
            keypoints,
            bearings: BearingConfig::default(),
            obstacles: ObstacleSchedule::default(),
            sa: SaConfig::default(),
            sa_seed: None,
            control: ControlConfig::default(),
            models: RobotModels::default(),
            avoidance: AvoidanceConfig::default(),
            tick_budget: None,
            initial_heading_deg: None,
        }
    }

    pub fn effective_tick_budget(&self) -> u64 {
        self.tick_budget
            .unwrap_or(500 * (self.map.rows() * self.map.cols()) as u64)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let cell = self.map.cell_size_cm();
        KeyPointSet::new(&self.map, self.keypoints.origin(), self.keypoints.others().to_vec()).map_err(keypoint_error)?;
        BearingConfig::new(self.bearings.as_array(), BearingConfig::DEFAULT_TOLERANCE_DEG)
            .map_err(|e| invalid("bearings", e.to_string()))?;
        self.control.validate().map_err(|e| invalid("control", e.to_string()))?;
        self.sa.validate().map_err(|e| invalid("sa", e.to_string()))?;
        self.models.validate().map_err(|e| invalid("models", e.to_string()))?;
        self.obstacles.validate(&self.map).map_err(|m| invalid("obstacles", m))?;
        if self.models.ultrasonic.reliable_range_cm < cell {
            return Err(invalid(
                "ultrasonic",
                format!("reliable range must cover one cell ({cell} cm)"),
            ));
        }
        if !(self.avoidance.detection_threshold_cm >= cell && self.avoidance.detection_threshold_cm.is_finite()) {
            return Err(invalid(
                "avoidance",
                format!("detection threshold must cover one cell ({cell} cm)"),
            ));
        }
        if self.tick_budget == Some(0) {
            return Err(invalid("mission", "tick budget must be positive"));
        }
        if self.initial_heading_deg.is_some_and(|h| !h.is_finite()) {
            return Err(invalid("mission", "initial heading must be finite"));
        }
        Ok(())
    }

    /// Scenario file text with every value written out.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "[map]\ncell_size_cm = {}", self.map.cell_size_cm());
        o.push_str(&self.map.to_text());
        let kp = &self.keypoints;
        let _ = writeln!(o, "\n[keypoints]\norigin = {}", cell_text(kp.origin()));
        for &c in kp.others() {
            let _ = writeln!(o, "{}", cell_text(c));
        }
        let _ = writeln!(o, "\n[bearings]");
        for mv in Move::ALL {
            let _ = writeln!(o, "{} = {}", mv.label(), self.bearings.bearing(mv));
        }
        let _ = writeln!(o, "tolerance_deg = {}", BearingConfig::DEFAULT_TOLERANCE_DEG);
        if !self.obstacles.is_empty() {
            let _ = writeln!(o, "\n[obstacles]");
            for e in &self.obstacles.entries {
                let mut line = if e.waypoints.len() == 1 {
                    format!("fixed {} appear={}", cell_text(e.waypoints[0].0), e.waypoints[0].1)
                } else {
                    let wps: Vec<String> = e.waypoints.iter().map(|(c, t)| format!("{}@{t}", cell_text(*c))).collect();
                    format!("moving {}", wps.join(" "))
                };
                if let Some(d) = e.disappear_tick {
                    let _ = write!(line, " disappear={d}");
                }
                let _ = writeln!(o, "{line}");
            }
        }
        let sa = &self.sa;
        let _ = writeln!(o, "\n[sa]");
        if let Some(seed) = self.sa_seed {
            let _ = writeln!(o, "seed = {seed}");
        }
        if let Some(t) = sa.initial_temperature {
            let _ = writeln!(o, "initial_temperature = {t}");
        }
        let _ = writeln!(o, "cooling_rate = {}", sa.cooling_rate);
        if let Some(n) = sa.iterations_per_temperature {
            let _ = writeln!(o, "iterations_per_temperature = {n}");
        }
        let _ = writeln!(o, "minimum_temperature = {}", sa.minimum_temperature);
        let c = &self.control;
        let _ = writeln!(
            o,
            "\n[control]\nbearing_tolerance_deg = {}\nturn_step_deg = {}\nmax_turn_ticks = {}",
            c.bearing_tolerance_deg, c.turn_step_deg, c.max_turn_ticks
        );
        let u = &self.models.ultrasonic;
        let _ = writeln!(
            o,
            "\n[ultrasonic]\nspeed_of_sound_cm_s = {}\nreliable_range_cm = {}\nmax_range_cm = {}\nbeyond_range_noise_cm = {}\nwithin_range_noise_cm = {}",
            u.speed_of_sound_cm_s, u.reliable_range_cm, u.max_range_cm, u.beyond_range_noise_cm, u.within_range_noise_cm
        );
        let e = &self.models.encoder;
        let _ = writeln!(
            o,
            "\n[encoder]\nwheel_circumference_cm = {}\ncounts_per_revolution = {}",
            e.wheel_circumference_cm, e.counts_per_revolution
        );
        let d = &self.models.drift;
        let _ = writeln!(
            o,
            "\n[drift]\nmin_cm = {}\nmax_cm = {}\nper_distance_cm = {}\nrecenter = {}",
            d.min_cm, d.max_cm, d.per_distance_cm, d.recenter
        );
        let _ = writeln!(o, "\n[compass]\nnoise_sd_deg = {}", self.models.compass_noise_sd_deg);
        let p = &self.models.profile;
        let _ = writeln!(o, "\n[motion]\nforward_pwm = {}\nturn_pwm = {}", p.forward_pwm, p.turn_pwm);
        let a = &self.avoidance;
        let _ = writeln!(
            o,
            "\n[avoidance]\nwait_timeout_ticks = {}\ndetection_threshold_cm = {}",
            a.wait_timeout_ticks, a.detection_threshold_cm
        );
        let mut mission = String::new();
        if let Some(b) = self.tick_budget {
            let _ = writeln!(mission, "tick_budget = {b}");
        }
        if let Some(h) = self.initial_heading_deg {
            let _ = writeln!(mission, "initial_heading_deg = {h}");
        }
        if !mission.is_empty() {
            let _ = write!(o, "\n[mission]\n{mission}");
        }
        o
    }
}

fn cell_text(c: Cell) -> String {
    format!("{},{}", c.row, c.col)
}

fn keypoint_error(e: MapError) -> ScenarioError {
    let entity = match &e {
        MapError::OutOfBounds(c) | MapError::KeyPointBlocked(c) | MapError::DuplicateKeyPoint(c) => {
            format!("key point {c}")
        }
        _ => "key points".to_string(),
    };
    invalid(entity, e.to_string())
}

/// A parsed scenario plus a note for every value that fell back to its
/// default.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub defaults: Vec<String>,
}

impl LoadedScenario {
    pub fn summary(&self) -> String {
        let s = &self.scenario;
        let mut o = format!(
            "map {}x{} ({} free cells, {} cm per cell)\norigin {} with {} other key points\n{} scheduled obstacles\n",
            s.map.rows(),
            s.map.cols(),
            s.map.free_cells().count(),
            s.map.cell_size_cm(),
            s.keypoints.origin(),
            s.keypoints.others().len(),
            s.obstacles.entries.len()
        );
        for d in &self.defaults {
            let _ = writeln!(o, "default {d}");
        }
        o
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

const SECTIONS: [&str; 13] = [
    "map",
    "keypoints",
    "bearings",
    "obstacles",
    "sa",
    "control",
    "ultrasonic",
    "encoder",
    "drift",
    "compass",
    "motion",
    "avoidance",
    "mission",
];

/// Lines of one section: (line number, trimmed content).
type Lines = Vec<(usize, String)>;

fn split_sections(text: &str) -> Result<BTreeMap<&'static str, (usize, Lines)>, ScenarioError> {
    let mut sections: BTreeMap<&'static str, (usize, Lines)> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = SECTIONS
                .iter()
                .find(|&&s| s == name.trim())
                .ok_or_else(|| parse_err(n, name, "unknown section"))?;
            if sections.contains_key(name) {
                return Err(parse_err(n, name, "section appears twice"));
            }
            sections.insert(name, (n, Vec::new()));
            current = Some(name);
            continue;
        }
        let name = current.ok_or_else(|| parse_err(n, line, "content before the first section"))?;
        sections.get_mut(name).expect("inserted above").1.push((n, line.to_string()));
    }
    Ok(sections)
}

/// `key = value` lines of one section, consumed field by field.
struct Fields {
    section: &'static str,
    entries: Vec<(usize, String, String, bool)>,
}

impl Fields {
    fn new(section: &'static str, lines: &[(usize, String)]) -> Result<Self, ScenarioError> {
        let mut entries: Vec<(usize, String, String, bool)> = Vec::new();
        for (n, line) in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(*n, line, "expected `key = value`"))?;
            let k = k.trim().to_string();
            if entries.iter().any(|e| e.1 == k) {
                return Err(parse_err(*n, &k, "field appears twice"));
            }
            entries.push((*n, k, v.trim().to_string(), false));
        }
        Ok(Self { section, entries })
    }

    fn take_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ScenarioError> {
        let Some(e) = self.entries.iter_mut().find(|e| e.1 == key) else {
            return Ok(None);
        };
        e.3 = true;
        e.2.parse()
            .map(Some)
            .map_err(|_| parse_err(e.0, &format!("{}.{key}", self.section), format!("cannot parse `{}`", e.2)))
    }

    fn take<T: FromStr + Display>(&mut self, key: &str, default: T, defaults: &mut Vec<String>) -> Result<T, ScenarioError> {
        match self.take_opt(key)? {
            Some(v) => Ok(v),
            None => {
                defaults.push(format!("{}.{key} = {default}", self.section));
                Ok(default)
            }
        }
    }

    fn take_or_note<T: FromStr>(&mut self, key: &str, note: &str, defaults: &mut Vec<String>) -> Result<Option<T>, ScenarioError> {
        let v = self.take_opt(key)?;
        if v.is_none() {
            defaults.push(format!("{}.{key} = {note}", self.section));
        }
        Ok(v)
    }

    fn finish(self) -> Result<(), ScenarioError> {
        match self.entries.iter().find(|e| !e.3) {
            Some(e) => Err(parse_err(e.0, &format!("{}.{}", self.section, e.1), "unknown field")),
            None => Ok(()),
        }
    }
}

fn parse_cell_text(s: &str, line: usize, field: &str) -> Result<Cell, ScenarioError> {
    let bad = || parse_err(line, field, format!("expected `row,col`, got `{s}`"));
    let (r, c) = s.split_once(',').ok_or_else(bad)?;
    Ok(Cell::new(r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

fn parse_tick(s: &str, line: usize, field: &str) -> Result<u64, ScenarioError> {
    s.parse().map_err(|_| parse_err(line, field, format!("expected a tick count, got `{s}`")))
}

fn parse_obstacle(line: usize, text: &str) -> Result<ObstacleEntry, ScenarioError> {
    let mut tokens = text.split_whitespace();
    let kind = tokens.next().unwrap_or("");
    let mut cells: Vec<(Cell, Option<u64>)> = Vec::new();
    let mut appear = None;
    let mut disappear = None;
    for tok in tokens {
        if let Some(v) = tok.strip_prefix("appear=") {
            appear = Some(parse_tick(v, line, "appear")?);
        } else if let Some(v) = tok.strip_prefix("disappear=") {
            disappear = Some(parse_tick(v, line, "disappear")?);
        } else if let Some((c, t)) = tok.split_once('@') {
            cells.push((parse_cell_text(c, line, "waypoint")?, Some(parse_tick(t, line, "waypoint")?)));
        } else {
            cells.push((parse_cell_text(tok, line, "cell")?, None));
        }
    }
    match kind {
        "fixed" => match cells.as_slice() {
            [(cell, None)] => Ok(ObstacleEntry::fixed(*cell, appear.unwrap_or(0), disappear)),
            _ => Err(parse_err(line, "fixed", "expected one `row,col` cell")),
        },
        "moving" => {
            if appear.is_some() {
                return Err(parse_err(line, "appear", "moving obstacles appear at their first waypoint"));
            }
            let waypoints = cells
                .into_iter()
                .map(|(c, t)| t.map(|t| (c, t)).ok_or_else(|| parse_err(line, "waypoint", "expected `row,col@tick`")))
                .collect::<Result<Vec<_>, _>>()?;
            if waypoints.is_empty() {
                return Err(parse_err(line, "moving", "no waypoints"));
            }
            Ok(ObstacleEntry::moving(waypoints, disappear))
        }
        other => Err(parse_err(line, other, "expected `fixed` or `moving`")),
    }
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario, ScenarioError> {
    let sections = split_sections(text)?;
    let mut defaults = Vec::new();
    let section = |name: &'static str| sections.get(name).cloned().unwrap_or_default();

    // [map]
    let (map_line, map_lines) = sections
        .get("map")
        .cloned()
        .ok_or_else(|| parse_err(1, "map", "missing [map] section"))?;
    let (settings, grid): (Vec<_>, Vec<_>) = map_lines.into_iter().partition(|(_, l)| l.contains('='));
    let mut map_fields = Fields::new("map", &settings)?;
    let cell_size: f64 = map_fields.take("cell_size_cm", DEFAULT_CELL_SIZE_CM, &mut defaults)?;
    map_fields.finish()?;
    let first_row_line = grid.first().map_or(map_line, |g| g.0);
    let grid_text: Vec<&str> = grid.iter().map(|(_, l)| l.as_str()).collect();
    let map = parse_map(&grid_text.join("\n"))
        .and_then(|m| m.with_cell_size(cell_size))
        .map_err(|e| {
            let line = match e {
                MapError::RaggedRows { row, .. } | MapError::InvalidChar { row, .. } => {
                    grid.get(row).map_or(first_row_line, |g| g.0)
                }
                MapError::InvalidCellSize(_) => settings.first().map_or(map_line, |s| s.0),
                _ => first_row_line,
            };
            parse_err(line, "map", e.to_string())
        })?;

    // [keypoints]
    let (kp_line, kp_lines) = section("keypoints");
    let mut origin = None;
    let mut others = Vec::new();
    for (n, l) in &kp_lines {
        if let Some((k, v)) = l.split_once('=') {
            if k.trim() != "origin" {
                return Err(parse_err(*n, k.trim(), "unknown field"));
            }
            if origin.is_some() {
                return Err(parse_err(*n, "origin", "field appears twice"));
            }
            origin = Some(parse_cell_text(v.trim(), *n, "origin")?);
        } else {
            others.push(parse_cell_text(l, *n, "keypoint")?);
        }
    }
    let origin = origin.ok_or_else(|| parse_err(kp_line.max(1), "keypoints.origin", "an origin is required"))?;
    let keypoints = KeyPointSet::new(&map, origin, others).map_err(keypoint_error)?;

    // [bearings]
    let (_, lines) = section("bearings");
    let mut f = Fields::new("bearings", &lines)?;
    let base = BearingConfig::default();
    let mut entries = Vec::new();
    for mv in Move::ALL {
        entries.push((mv, f.take(mv.label(), base.bearing(mv), &mut defaults)?));
    }
    let tolerance = f.take("tolerance_deg", BearingConfig::DEFAULT_TOLERANCE_DEG, &mut defaults)?;
    f.finish()?;
    let bearings = BearingConfig::from_entries(&entries, tolerance).map_err(|e| invalid("bearings", e.to_string()))?;

    // [obstacles]
    let (_, lines) = section("obstacles");
    let obstacles = ObstacleSchedule::new(
        lines
            .iter()
            .map(|(n, l)| parse_obstacle(*n, l))
            .collect::<Result<_, _>>()?,
    );

    // [sa]
    let (_, lines) = section("sa");
    let mut f = Fields::new("sa", &lines)?;
    let sd = SaConfig::default();
    let sa_seed = f.take_or_note("seed", "run seed", &mut defaults)?;
    let sa = SaConfig {
        initial_temperature: f.take_or_note("initial_temperature", "largest leg cost", &mut defaults)?,
        cooling_rate: f.take("cooling_rate", sd.cooling_rate, &mut defaults)?,
        iterations_per_temperature: f.take_or_note("iterations_per_temperature", "100 per key point", &mut defaults)?,
        minimum_temperature: f.take("minimum_temperature", sd.minimum_temperature, &mut defaults)?,
        rng_seed: sd.rng_seed,
    };
    f.finish()?;

    // [control]
    let (_, lines) = section("control");
    let mut f = Fields::new("control", &lines)?;
    let cd = ControlConfig::default();
    let control = ControlConfig {
        bearing_tolerance_deg: f.take("bearing_tolerance_deg", cd.bearing_tolerance_deg, &mut defaults)?,
        turn_step_deg: f.take("turn_step_deg", cd.turn_step_deg, &mut defaults)?,
        max_turn_ticks: f.take("max_turn_ticks", cd.max_turn_ticks, &mut defaults)?,
    };
    f.finish()?;

    // models
    let md = RobotModels::default();
    let mut models = md;
    let (_, lines) = section("ultrasonic");
    let mut f = Fields::new("ultrasonic", &lines)?;
    let u = &mut models.ultrasonic;
    u.speed_of_sound_cm_s = f.take("speed_of_sound_cm_s", md.ultrasonic.speed_of_sound_cm_s, &mut defaults)?;
    u.reliable_range_cm = f.take("reliable_range_cm", md.ultrasonic.reliable_range_cm, &mut defaults)?;
    u.max_range_cm = f.take("max_range_cm", md.ultrasonic.max_range_cm, &mut defaults)?;
    u.beyond_range_noise_cm = f.take("beyond_range_noise_cm", md.ultrasonic.beyond_range_noise_cm, &mut defaults)?;
    u.within_range_noise_cm = f.take("within_range_noise_cm", md.ultrasonic.within_range_noise_cm, &mut defaults)?;
    f.finish()?;

    let (_, lines) = section("encoder");
    let mut f = Fields::new("encoder", &lines)?;
    models.encoder.wheel_circumference_cm =
        f.take("wheel_circumference_cm", md.encoder.wheel_circumference_cm, &mut defaults)?;
    models.encoder.counts_per_revolution =
        f.take("counts_per_revolution", md.encoder.counts_per_revolution, &mut defaults)?;
    f.finish()?;

    let (_, lines) = section("drift");
    let mut f = Fields::new("drift", &lines)?;
    models.drift.min_cm = f.take("min_cm", md.drift.min_cm, &mut defaults)?;
    models.drift.max_cm = f.take("max_cm", md.drift.max_cm, &mut defaults)?;
    models.drift.per_distance_cm = f.take("per_distance_cm", md.drift.per_distance_cm, &mut defaults)?;
    models.drift.recenter = f.take("recenter", md.drift.recenter, &mut defaults)?;
    f.finish()?;

    let (_, lines) = section("compass");
    let mut f = Fields::new("compass", &lines)?;
    models.compass_noise_sd_deg = f.take("noise_sd_deg", md.compass_noise_sd_deg, &mut defaults)?;
    f.finish()?;

    let (_, lines) = section("motion");
    let mut f = Fields::new("motion", &lines)?;
    models.profile.forward_pwm = f.take("forward_pwm", md.profile.forward_pwm, &mut defaults)?;
    models.profile.turn_pwm = f.take("turn_pwm", md.profile.turn_pwm, &mut defaults)?;
    f.finish()?;

    let (_, lines) = section("avoidance");
    let mut f = Fields::new("avoidance", &lines)?;
    let ad = AvoidanceConfig::default();
    let avoidance = AvoidanceConfig {
        wait_timeout_ticks: f.take("wait_timeout_ticks", ad.wait_timeout_ticks, &mut defaults)?,
        detection_threshold_cm: f.take("detection_threshold_cm", ad.detection_threshold_cm, &mut defaults)?,
    };
    f.finish()?;

    let (_, lines) = section("mission");
    let mut f = Fields::new("mission", &lines)?;
    let tick_budget = f.take_or_note("tick_budget", "500 per map cell", &mut defaults)?;
    let initial_heading_deg = f.take_or_note("initial_heading_deg", "forward bearing", &mut defaults)?;
    f.finish()?;

    let scenario = Scenario {
        map,
        keypoints,
        bearings,
        obstacles,
        sa,
        sa_seed,
        control,
        models,
        avoidance,
        tick_budget,
        initial_heading_deg,
    };
    scenario.validate()?;
    Ok(LoadedScenario { scenario, defaults })
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
