//! Dynamic-obstacle handling.
//!
//! On detecting something directly ahead the robot stops and waits. If the
//! obstacle outlasts the wait timeout it probes right, then left, then back;
//! the first free direction triggers a replan over the key points not yet
//! covered, with the obstructed cell treated as blocked for that replan only.
//! If every direction is blocked it goes back to waiting.

use serde::Serialize;

use crate::map::{Cell, GridMap, Move};
use crate::robot::Reading;
use crate::tour::{anneal, pairwise_distances, pairwise_distances_reusing, DistanceMatrix, SaConfig, Tour, TourError, TourShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Cruising,
    Waiting { since_tick: u64 },
    ProbingRight,
    ProbingLeft,
    ProbingBack,
    Replanning,
}

impl Phase {
    pub fn kind(self) -> PhaseKind {
        match self {
            Phase::Cruising => PhaseKind::Cruising,
            Phase::Waiting { .. } => PhaseKind::Waiting,
            Phase::ProbingRight => PhaseKind::ProbingRight,
            Phase::ProbingLeft => PhaseKind::ProbingLeft,
            Phase::ProbingBack => PhaseKind::ProbingBack,
            Phase::Replanning => PhaseKind::Replanning,
        }
    }

    pub fn label(self) -> &'static str {
        self.kind().label()
    }
}

/// A phase without its timer, as recorded in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PhaseKind {
    Cruising,
    Waiting,
    ProbingRight,
    ProbingLeft,
    ProbingBack,
    Replanning,
}

impl PhaseKind {
    pub const ALL: [PhaseKind; 6] = [
        PhaseKind::Cruising,
        PhaseKind::Waiting,
        PhaseKind::ProbingRight,
        PhaseKind::ProbingLeft,
        PhaseKind::ProbingBack,
        PhaseKind::Replanning,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PhaseKind::Cruising => "cruising",
            PhaseKind::Waiting => "waiting",
            PhaseKind::ProbingRight => "probing_right",
            PhaseKind::ProbingLeft => "probing_left",
            PhaseKind::ProbingBack => "probing_back",
            PhaseKind::Replanning => "replanning",
        }
    }

    pub fn from_label(label: &str) -> Option<PhaseKind> {
        Self::ALL.into_iter().find(|k| k.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvoidanceConfig {
    pub wait_timeout_ticks: u64,
    pub detection_threshold_cm: f64,
}

impl Default for AvoidanceConfig {
    fn default() -> Self {
        Self {
            wait_timeout_ticks: 10,
            detection_threshold_cm: 100.0,
        }
    }
}

/// What was in front of the robot when it first stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub facing: Move,
    pub blocked_cell: Option<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvoidanceState {
    pub phase: Phase,
    pub config: AvoidanceConfig,
    pub cell_size_cm: f64,
    pub detection: Option<Detection>,
}

/// One tick's sensing as seen by the state machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub cell: Cell,
    /// Grid direction the range sensor points along.
    pub facing: Move,
    /// Whether the compass reads within tolerance of the direction the
    /// current phase wants to look along (the next route move when cruising).
    pub aligned: bool,
    pub reading: Reading,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Decision {
    /// Keep following the route.
    Proceed,
    /// Stay put this tick.
    Halt,
    /// The obstacle cleared; carry on with the current route.
    Resume,
    /// Rotate toward this direction before the phase can evaluate.
    TurnTo(Move),
    /// Plan a new route from here.
    Replan {
        from_cell: Cell,
        facing_move: Move,
        blocked_cell: Option<Cell>,
    },
}

impl AvoidanceState {
    pub fn new(config: AvoidanceConfig, cell_size_cm: f64) -> Self {
        Self {
            phase: Phase::Cruising,
            config,
            cell_size_cm,
            detection: None,
        }
    }

    /// The direction the current phase needs to sense along, if any.
    pub fn look_move(&self) -> Option<Move> {
        let facing = self.detection?.facing;
        match self.phase {
            Phase::Cruising | Phase::Replanning => None,
            Phase::Waiting { .. } => Some(facing),
            Phase::ProbingRight => Some(facing.right_of()),
            Phase::ProbingLeft => Some(facing.left_of()),
            Phase::ProbingBack => Some(facing.opposite()),
        }
    }

    /// An obstacle counts when the reading is trusted, within the detection
    /// threshold, and rounds to the adjacent cell.
    pub fn obstructed(&self, reading: &Reading) -> bool {
        reading.reliable
            && reading.distance_cm <= self.config.detection_threshold_cm
            && reading.distance_cm < 1.5 * self.cell_size_cm
    }

    fn with_phase(&self, phase: Phase) -> Self {
        Self { phase, ..*self }
    }
}

/// The transition function. Total over every phase and observation.
pub fn avoidance_step(state: &AvoidanceState, obs: &Observation, now_tick: u64) -> (AvoidanceState, Decision) {
    let blocked = state.obstructed(&obs.reading);
    let looking_right_way = state.look_move().is_none_or(|m| m == obs.facing) && obs.aligned;

    match state.phase {
        Phase::Cruising => {
            if obs.aligned && blocked {
                let mut next = state.with_phase(Phase::Waiting { since_tick: now_tick });
                next.detection = Some(Detection {
                    facing: obs.facing,
                    blocked_cell: obs.cell.step(obs.facing),
                });
                (next, Decision::Halt)
            } else {
                (*state, Decision::Proceed)
            }
        }
        Phase::Waiting { since_tick } => {
            let look = state.look_move().expect("waiting always has a detection");
            if !looking_right_way {
                (*state, Decision::TurnTo(look))
            } else if !blocked {
                let mut next = state.with_phase(Phase::Cruising);
                next.detection = None;
                (next, Decision::Resume)
            } else if now_tick.saturating_sub(since_tick) >= state.config.wait_timeout_ticks {
                let next = state.with_phase(Phase::ProbingRight);
                let dir = next.look_move().expect("probing has a direction");
                (next, Decision::TurnTo(dir))
            } else {
                (*state, Decision::Halt)
            }
        }
        Phase::ProbingRight | Phase::ProbingLeft | Phase::ProbingBack => {
            let look = state.look_move().expect("probing has a direction");
            if !looking_right_way {
                return (*state, Decision::TurnTo(look));
            }
            if !blocked {
                let detection = state.detection.expect("probing has a detection");
                return (
                    state.with_phase(Phase::Replanning),
                    Decision::Replan {
                        from_cell: obs.cell,
                        facing_move: look,
                        blocked_cell: detection.blocked_cell,
                    },
                );
            }
            let next_phase = match state.phase {
                Phase::ProbingRight => Phase::ProbingLeft,
                Phase::ProbingLeft => Phase::ProbingBack,
                _ => Phase::Waiting { since_tick: now_tick },
            };
            let next = state.with_phase(next_phase);
            match next_phase {
                Phase::Waiting { .. } => (next, Decision::Halt),
                _ => {
                    let dir = next.look_move().expect("probing has a direction");
                    (next, Decision::TurnTo(dir))
                }
            }
        }
        Phase::Replanning => {
            let mut next = state.with_phase(Phase::Cruising);
            next.detection = None;
            (next, Decision::Proceed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplanRequest {
    pub from_cell: Cell,
    pub facing_move: Move,
    /// Key points still to visit, covered ones excluded.
    pub remaining_keypoints: Vec<Cell>,
    /// Treated as blocked for this replan's searches only.
    pub blocked_cell: Option<Cell>,
    pub origin: Cell,
}

/// Plans current cell → remaining key points → origin on the static map
/// with the obstructed cell blocked. Returns the tour and the matrix its
/// indices refer to. Pairs whose `prior` path avoids the new block are
/// reused rather than searched again.
pub fn build_replan(
    request: &ReplanRequest,
    map: &GridMap,
    prior: Option<&DistanceMatrix>,
    sa: &SaConfig,
) -> Result<(Tour, DistanceMatrix), TourError> {
    let planning_map = map.with_blocked(request.blocked_cell);
    let (points, shape) = if request.from_cell == request.origin {
        let mut pts = vec![request.origin];
        pts.extend(&request.remaining_keypoints);
        (pts, TourShape::Closed)
    } else {
        let mut pts = vec![request.from_cell];
        pts.extend(&request.remaining_keypoints);
        pts.push(request.origin);
        let end = pts.len() - 1;
        (pts, TourShape::OpenTo(end))
    };
    let matrix = match prior {
        Some(prior) => pairwise_distances_reusing(&planning_map, &points, prior)?,
        None => pairwise_distances(&planning_map, &points)?,
    };
    let run = anneal(&matrix, shape, sa)?;
    Ok((run.tour, matrix))
}
