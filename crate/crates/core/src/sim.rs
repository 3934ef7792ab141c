//! Discrete-time mission engine.
//!
//! Each tick runs, in order: obstacle schedule update, compass and range
//! reads, the avoidance state machine, one actuator command, kinematics, and
//! a trace append. Tick 0 records the starting pose only.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::avoidance::{avoidance_step, build_replan, AvoidanceState, Decision, Observation, ReplanRequest};
use crate::control::{apply_turn, heading_decision, HeadingCommand};
use crate::map::{Cell, GridMap, Move};
use crate::robot::{compass_read, forward_step, ultrasonic_read, Mode, RangeWorld, Reading, RobotState};
use crate::scenario::Scenario;
use crate::tour::{anneal, pairwise_distances, DistanceMatrix, SaConfig, SaRun, TourError, TourShape};
use crate::trace::{Command, MissionTrace, RangeSample, TraceEvent, TraceHeader, TraceRecord};
use crate::{seeded_rng, SimRng, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("key point {0} cannot be reached from the origin")]
    DisconnectedKeyPoint(Cell),
    #[error(transparent)]
    Tour(TourError),
}

impl From<TourError> for SimError {
    fn from(e: TourError) -> Self {
        match e {
            TourError::DisconnectedKeyPoint(c) => SimError::DisconnectedKeyPoint(c),
            TourError::InvalidConfig(m) => SimError::InvalidScenario(m),
            other => SimError::Tour(other),
        }
    }
}

/// Why a started mission stopped short.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MissionFailure {
    /// A replan found a remaining key point (or the origin) unreachable.
    DisconnectedKeyPoint(Cell),
    TickBudgetExceeded(u64),
    TurnTimeout(u32),
}

impl MissionFailure {
    pub fn encode(&self) -> String {
        match self {
            MissionFailure::DisconnectedKeyPoint(c) => format!("disconnected:{}:{}", c.row, c.col),
            MissionFailure::TickBudgetExceeded(n) => format!("tick_budget:{n}"),
            MissionFailure::TurnTimeout(n) => format!("turn_timeout:{n}"),
        }
    }

    pub fn decode(s: &str) -> Option<MissionFailure> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["disconnected", r, c] => Some(MissionFailure::DisconnectedKeyPoint(Cell::new(r.parse().ok()?, c.parse().ok()?))),
            ["tick_budget", n] => Some(MissionFailure::TickBudgetExceeded(n.parse().ok()?)),
            ["turn_timeout", n] => Some(MissionFailure::TurnTimeout(n.parse().ok()?)),
            _ => None,
        }
    }
}

impl std::fmt::Display for MissionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MissionFailure::DisconnectedKeyPoint(c) => write!(f, "key point {c} became unreachable"),
            MissionFailure::TickBudgetExceeded(n) => write!(f, "tick budget of {n} exhausted"),
            MissionFailure::TurnTimeout(n) => write!(f, "heading not reached after {n} turn ticks"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissionResult {
    pub success: bool,
    pub failure: Option<MissionFailure>,
    /// Key points in first-visit order, origin first.
    pub covered: Vec<Cell>,
    pub ended_at: Cell,
    pub planned_cost: usize,
    /// Forward moves actually made.
    pub executed_cost: usize,
    /// Last tick index.
    pub ticks: u64,
    pub replans: usize,
}

/// One scheduled dynamic obstacle. A single waypoint is a fixed obstacle;
/// more make it jump to each waypoint cell at that waypoint's tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObstacleEntry {
    pub waypoints: Vec<(Cell, u64)>,
    pub disappear_tick: Option<u64>,
}

impl ObstacleEntry {
    pub fn fixed(cell: Cell, appear_tick: u64, disappear_tick: Option<u64>) -> Self {
        Self {
            waypoints: vec![(cell, appear_tick)],
            disappear_tick,
        }
    }

    pub fn moving(waypoints: Vec<(Cell, u64)>, disappear_tick: Option<u64>) -> Self {
        Self {
            waypoints,
            disappear_tick,
        }
    }

    pub fn appear_tick(&self) -> u64 {
        self.waypoints.first().map_or(0, |w| w.1)
    }

    /// Where the schedule puts this obstacle at `tick`, if present.
    pub fn scheduled_at(&self, tick: u64) -> Option<Cell> {
        if tick < self.appear_tick() || self.disappear_tick.is_some_and(|d| tick >= d) {
            return None;
        }
        self.waypoints.iter().rev().find(|w| w.1 <= tick).map(|w| w.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ObstacleSchedule {
    pub entries: Vec<ObstacleEntry>,
}

impl ObstacleSchedule {
    pub fn new(entries: Vec<ObstacleEntry>) -> Self {
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self, map: &GridMap) -> Result<(), String> {
        for (i, e) in self.entries.iter().enumerate() {
            let name = format!("obstacle {}", i + 1);
            if e.waypoints.is_empty() {
                return Err(format!("{name} has no cells"));
            }
            for w in e.waypoints.windows(2) {
                if w[1].1 <= w[0].1 {
                    return Err(format!("{name}: waypoint ticks must strictly increase"));
                }
            }
            if let Some(d) = e.disappear_tick {
                if d <= e.appear_tick() {
                    return Err(format!(
                        "{name}: disappear tick {d} must be after appear tick {}",
                        e.appear_tick()
                    ));
                }
            }
            for &(cell, _) in &e.waypoints {
                if !map.in_bounds(cell) {
                    return Err(format!("{name}: cell {cell} is outside the map"));
                }
                if !map.is_free(cell) {
                    return Err(format!("{name}: cell {cell} is a static obstacle"));
                }
            }
        }
        Ok(())
    }
}

/// Static map plus the dynamic obstacles present this tick.
struct WorldView<'a> {
    map: &'a GridMap,
    obstacles: &'a [Option<Cell>],
}

impl WorldView<'_> {
    fn dynamic_at(&self, cell: Cell) -> bool {
        self.obstacles.contains(&Some(cell))
    }
}

impl RangeWorld for WorldView<'_> {
    fn occupied(&self, cell: Cell) -> bool {
        !self.map.is_free(cell) || self.dynamic_at(cell)
    }

    fn cell_size_cm(&self) -> f64 {
        self.map.cell_size_cm()
    }
}

/// The initial plan: matrix over the key points and the annealing run.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub matrix: DistanceMatrix,
    pub run: SaRun,
    /// Cell route of the planned tour, origin at both ends.
    pub route: Vec<Cell>,
    pub sa_seed: u64,
}

/// Annealing settings for a run: the scenario's seed if it pins one,
/// otherwise the run seed.
pub fn sa_config_for(scenario: &Scenario, seed: u64) -> SaConfig {
    scenario.sa.clone().with_seed(scenario.sa_seed.unwrap_or(seed))
}

pub fn plan_mission(scenario: &Scenario, seed: u64) -> Result<Plan, SimError> {
    let cfg = sa_config_for(scenario, seed);
    let matrix = pairwise_distances(&scenario.map, &scenario.keypoints.all())?;
    let run = anneal(&matrix, TourShape::Closed, &cfg)?;
    let route = run.tour.route(&matrix)?;
    Ok(Plan {
        matrix,
        run,
        route,
        sa_seed: cfg.rng_seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionRun {
    pub result: MissionResult,
    pub trace: MissionTrace,
    pub plan: Plan,
    /// Every replan issued, in order.
    pub replan_requests: Vec<ReplanRequest>,
}

/// A mission in progress. Drive it with [`Mission::step`] or let
/// [`run_mission`] do so.
pub struct Mission<'a> {
    scenario: &'a Scenario,
    rng: SimRng,
    sa: SaConfig,
    plan: Plan,
    robot: RobotState,
    fsm: AvoidanceState,
    route: VecDeque<Cell>,
    covered: Vec<Cell>,
    obstacles: Vec<Option<Cell>>,
    tick: u64,
    budget: u64,
    executed: usize,
    replans: usize,
    turn_streak: u32,
    failure: Option<MissionFailure>,
    success: bool,
    records: Vec<TraceRecord>,
    requests: Vec<ReplanRequest>,
    seed: u64,
}

impl<'a> Mission<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate().map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let plan = plan_mission(scenario, seed)?;
        let origin = scenario.keypoints.origin();
        let heading = scenario
            .initial_heading_deg
            .unwrap_or_else(|| scenario.bearings.bearing(Move::Forward));
        let robot = RobotState::new(origin, heading);
        let route: VecDeque<Cell> = plan.route.iter().skip(1).copied().collect();
        let mut mission = Self {
            scenario,
            rng: seeded_rng(seed),
            sa: sa_config_for(scenario, seed),
            robot,
            fsm: AvoidanceState::new(scenario.avoidance, scenario.map.cell_size_cm()),
            route,
            covered: vec![origin],
            obstacles: vec![None; scenario.obstacles.entries.len()],
            tick: 0,
            budget: scenario.effective_tick_budget(),
            executed: 0,
            replans: 0,
            turn_streak: 0,
            failure: None,
            success: false,
            records: Vec::new(),
            requests: Vec::new(),
            seed,
            plan,
        };
        let deferred = mission.update_obstacles();
        let mut events = vec![TraceEvent::Covered(origin)];
        events.extend(deferred.into_iter().map(TraceEvent::Deferred));
        mission.records.push(TraceRecord {
            tick: 0,
            cell: robot.cell,
            heading_deg: robot.heading_deg,
            lateral_offset_cm: robot.lateral_offset_cm,
            drift_cm: 0.0,
            compass_deg: None,
            range: None,
            phase: mission.fsm.phase.kind(),
            command: None,
            events,
        });
        mission.check_done();
        Ok(mission)
    }

    pub fn is_finished(&self) -> bool {
        self.success || self.failure.is_some()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn fsm(&self) -> &AvoidanceState {
        &self.fsm
    }

    /// Dynamic obstacle cells present right now.
    pub fn obstacle_cells(&self) -> Vec<Cell> {
        self.obstacles.iter().flatten().copied().collect()
    }

    pub fn remaining_route(&self) -> Vec<Cell> {
        self.route.iter().copied().collect()
    }

    /// Moves obstacles to their scheduled cells, holding back any whose
    /// target is the robot's cell. Returns the held-back targets.
    fn update_obstacles(&mut self) -> Vec<Cell> {
        let mut deferred = Vec::new();
        for (slot, entry) in self.obstacles.iter_mut().zip(&self.scenario.obstacles.entries) {
            match entry.scheduled_at(self.tick) {
                Some(c) if c == self.robot.cell => {
                    deferred.push(c);
                    if *slot == Some(c) {
                        *slot = None;
                    }
                }
                target => *slot = target,
            }
        }
        deferred
    }

    fn check_done(&mut self) {
        if self.failure.is_some() {
            return;
        }
        let origin = self.scenario.keypoints.origin();
        let all_covered = self.scenario.keypoints.all().iter().all(|k| self.covered.contains(k));
        if self.route.is_empty() && self.robot.cell == origin && all_covered {
            self.success = true;
        } else if self.tick >= self.budget {
            self.failure = Some(MissionFailure::TickBudgetExceeded(self.budget));
        }
    }

    fn command_toward(&self, measured: f64, mv: Move) -> HeadingCommand {
        heading_decision(measured, self.scenario.bearings.bearing(mv), &self.scenario.control)
    }

    /// Advances one tick. No-op once the mission has finished.
    pub fn step(&mut self) {
        if self.is_finished() {
            return;
        }
        self.tick += 1;
        let sc = self.scenario;
        let mut events = self.update_obstacles().into_iter().map(TraceEvent::Deferred).collect::<Vec<_>>();

        let measured = compass_read(self.robot.heading_deg, sc.models.compass_noise_sd_deg, &mut self.rng);
        let facing = sc.bearings.nearest_move(self.robot.heading_deg);
        let reading: Reading = {
            let world = WorldView {
                map: &sc.map,
                obstacles: &self.obstacles,
            };
            ultrasonic_read(&world, &self.robot, facing, &sc.models.ultrasonic, &mut self.rng)
        };

        let next_cell = *self.route.front().expect("a running mission has a route");
        let route_move = self
            .robot
            .cell
            .move_to(next_cell)
            .expect("route cells are adjacent");
        let look = self.fsm.look_move().unwrap_or(route_move);
        let aligned = facing == look && self.command_toward(measured, look) == HeadingCommand::Forward;
        let obs = Observation {
            cell: self.robot.cell,
            facing,
            aligned,
            reading,
        };
        let (fsm, decision) = avoidance_step(&self.fsm, &obs, self.tick);
        self.fsm = fsm;

        let mut command = Command::Stop;
        match decision {
            Decision::Proceed | Decision::Resume => {
                if decision == Decision::Resume {
                    events.push(TraceEvent::Resume);
                }
                command = match self.command_toward(measured, route_move) {
                    HeadingCommand::Forward => Command::Forward,
                    HeadingCommand::TurnLeft => Command::TurnLeft,
                    HeadingCommand::TurnRight => Command::TurnRight,
                };
            }
            Decision::Halt => {}
            Decision::TurnTo(mv) => {
                command = match self.command_toward(measured, mv) {
                    HeadingCommand::TurnLeft => Command::TurnLeft,
                    HeadingCommand::TurnRight => Command::TurnRight,
                    HeadingCommand::Forward => Command::Stop,
                };
            }
            Decision::Replan {
                from_cell,
                facing_move,
                blocked_cell,
            } => {
                let request = self.replan_request(from_cell, facing_move, blocked_cell);
                let built = build_replan(&request, &sc.map, Some(&self.plan.matrix), &self.sa);
                self.requests.push(request.clone());
                match built {
                    Ok((tour, matrix)) => {
                        let route = tour.route(&matrix).expect("replanned legs are feasible");
                        self.route = route.into_iter().skip(1).collect();
                        self.replans += 1;
                        events.push(TraceEvent::Replan {
                            from: from_cell,
                            blocked: request.blocked_cell,
                            cost: tour.total_cost,
                        });
                    }
                    Err(TourError::DisconnectedKeyPoint(c)) => {
                        self.failure = Some(MissionFailure::DisconnectedKeyPoint(c));
                    }
                    Err(e) => panic!("replanning failed unexpectedly: {e}"),
                }
            }
        }

        let mut drift = 0.0;
        match command {
            Command::TurnLeft | Command::TurnRight => {
                let hc = if command == Command::TurnLeft {
                    HeadingCommand::TurnLeft
                } else {
                    HeadingCommand::TurnRight
                };
                self.robot = apply_turn(&self.robot, hc, &sc.control);
                self.turn_streak += 1;
                if self.turn_streak > sc.control.max_turn_ticks {
                    self.failure = Some(MissionFailure::TurnTimeout(sc.control.max_turn_ticks));
                }
            }
            Command::Forward => {
                self.turn_streak = 0;
                let world = WorldView {
                    map: &sc.map,
                    obstacles: &self.obstacles,
                };
                if world.occupied(next_cell) {
                    command = Command::Stop;
                    self.robot.mode = Mode::Halted;
                    events.push(TraceEvent::Bump(next_cell));
                } else {
                    let out = forward_step(&self.robot, route_move, &sc.map, &sc.models, &mut self.rng)
                        .expect("route cells are free in the static map");
                    self.robot = out.state;
                    drift = out.drift_cm;
                    self.route.pop_front();
                    self.executed += 1;
                    if sc.keypoints.contains(self.robot.cell) && !self.covered.contains(&self.robot.cell) {
                        self.covered.push(self.robot.cell);
                        events.push(TraceEvent::Covered(self.robot.cell));
                    }
                }
            }
            Command::Stop => {
                self.turn_streak = 0;
                self.robot.mode = Mode::Halted;
            }
        }

        self.records.push(TraceRecord {
            tick: self.tick,
            cell: self.robot.cell,
            heading_deg: self.robot.heading_deg,
            lateral_offset_cm: self.robot.lateral_offset_cm,
            drift_cm: drift,
            compass_deg: Some(measured),
            range: Some(RangeSample {
                distance_cm: reading.distance_cm,
                reliable: reading.reliable,
            }),
            phase: self.fsm.phase.kind(),
            command: Some(command),
            events,
        });
        self.check_done();
    }

    fn replan_request(&self, from_cell: Cell, facing_move: Move, blocked: Option<Cell>) -> ReplanRequest {
        let keypoints = &self.scenario.keypoints;
        let remaining: Vec<Cell> = keypoints
            .others()
            .iter()
            .filter(|k| !self.covered.contains(k))
            .copied()
            .collect();
        // An obstacle sitting on a point still to be visited is waited out,
        // not planned around.
        let blocked_cell = blocked.filter(|&b| !remaining.contains(&b) && b != keypoints.origin());
        ReplanRequest {
            from_cell,
            facing_move,
            remaining_keypoints: remaining,
            blocked_cell,
            origin: keypoints.origin(),
        }
    }

    pub fn result(&self) -> MissionResult {
        MissionResult {
            success: self.success,
            failure: self.failure.clone(),
            covered: self.covered.clone(),
            ended_at: self.robot.cell,
            planned_cost: self.plan.run.tour.total_cost,
            executed_cost: self.executed,
            ticks: self.tick,
            replans: self.replans,
        }
    }

    pub fn into_run(self) -> MissionRun {
        let result = self.result();
        let trace = MissionTrace {
            header: TraceHeader {
                rng: RNG_ALGORITHM.to_string(),
                seed: self.seed,
                rows: self.scenario.map.rows(),
                cols: self.scenario.map.cols(),
                cell_size_cm: self.scenario.map.cell_size_cm(),
                keypoints: self.scenario.keypoints.all(),
            },
            records: self.records,
            summary: result.clone(),
        };
        MissionRun {
            result,
            trace,
            plan: self.plan,
            replan_requests: self.requests,
        }
    }
}

/// Plans and executes a whole mission. Planning failures are errors;
/// failures after the robot starts moving are reported in the result.
pub fn run_mission(scenario: &Scenario, seed: u64) -> Result<MissionRun, SimError> {
    let mut mission = Mission::new(scenario, seed)?;
    while !mission.is_finished() {
        mission.step();
    }
    Ok(mission.into_run())
}
