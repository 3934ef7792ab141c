//! Simulated sensing and actuation: ultrasonic ranging, compass, wheel
//! encoders and the lateral drift of a forward motion.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::map::{Cell, GridMap, Move};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobotError {
    #[error("echo time must be non-negative, got {0} s")]
    NegativeTime(f64),
    #[error("distance must be non-negative, got {0} cm")]
    NegativeDistance(f64),
    #[error("cell {0} ahead is blocked")]
    BlockedAhead(Cell),
    #[error("no bearing configured for {0}")]
    MissingBearing(Move),
    #[error("bearings {bearings:?} are not a 90° cross within {tolerance_deg}°")]
    SkewedBearings { bearings: [f64; 4], tolerance_deg: f64 },
    #[error("invalid model parameter: {0}")]
    InvalidModel(String),
}

/// Maps an angle in degrees into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Smallest signed rotation from `from` to `to`, in `(-180, 180]`.
/// Positive is clockwise.
pub fn signed_angle_diff(from: f64, to: f64) -> f64 {
    let e = normalize_deg(to - from);
    if e > 180.0 {
        e - 360.0
    } else {
        e
    }
}

/// Compass bearing of each grid move, indexed by move id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BearingConfig {
    bearings: [f64; 4],
}

impl BearingConfig {
    pub const DEFAULT_TOLERANCE_DEG: f64 = 1.0;

    /// Bearings for Forward, Left, Backward, Right. They must form a 90°
    /// cross (either handedness); each deviation must stay strictly below
    /// `tolerance_deg`.
    pub fn new(bearings: [f64; 4], tolerance_deg: f64) -> Result<Self, RobotError> {
        if bearings.iter().any(|b| !b.is_finite()) {
            return Err(RobotError::InvalidModel(format!("non-finite bearing in {bearings:?}")));
        }
        let bearings = bearings.map(normalize_deg);
        let rel = |mv: Move| signed_angle_diff(bearings[Move::Forward.id()], bearings[mv.id()]);
        let right = rel(Move::Right);
        let quarter = 90f64.copysign(right);
        let deviations = [
            (rel(Move::Backward).abs() - 180.0).abs(),
            (right - quarter).abs(),
            (rel(Move::Left) + quarter).abs(),
        ];
        if deviations.iter().any(|&d| d >= tolerance_deg) {
            return Err(RobotError::SkewedBearings {
                bearings,
                tolerance_deg,
            });
        }
        Ok(Self { bearings })
    }

    /// Builds from labelled entries; every move must appear.
    pub fn from_entries(entries: &[(Move, f64)], tolerance_deg: f64) -> Result<Self, RobotError> {
        let mut out = [None; 4];
        for &(mv, deg) in entries {
            out[mv.id()] = Some(deg);
        }
        let mut bearings = [0.0; 4];
        for mv in Move::ALL {
            bearings[mv.id()] = out[mv.id()].ok_or(RobotError::MissingBearing(mv))?;
        }
        Self::new(bearings, tolerance_deg)
    }

    pub fn bearing(&self, mv: Move) -> f64 {
        self.bearings[mv.id()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.bearings
    }

    /// The move whose bearing is closest to `heading_deg`.
    pub fn nearest_move(&self, heading_deg: f64) -> Move {
        Move::ALL
            .into_iter()
            .min_by(|&a, &b| {
                let da = signed_angle_diff(heading_deg, self.bearing(a)).abs();
                let db = signed_angle_diff(heading_deg, self.bearing(b)).abs();
                da.total_cmp(&db)
            })
            .expect("four moves")
    }
}

impl Default for BearingConfig {
    fn default() -> Self {
        Self {
            bearings: [0.0, 270.0, 180.0, 90.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Idle,
    Turning,
    Driving,
    Halted,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Turning => "turning",
            Mode::Driving => "driving",
            Mode::Halted => "halted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobotState {
    pub cell: Cell,
    /// Signed distance from the centerline of the current cell track.
    pub lateral_offset_cm: f64,
    /// True heading in `[0, 360)`.
    pub heading_deg: f64,
    /// Accumulated counts, left and right wheel.
    pub encoder_counts: [u64; 2],
    pub mode: Mode,
}

impl RobotState {
    pub fn new(cell: Cell, heading_deg: f64) -> Self {
        Self {
            cell,
            lateral_offset_cm: 0.0,
            heading_deg: normalize_deg(heading_deg),
            encoder_counts: [0, 0],
            mode: Mode::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UltrasonicModel {
    pub speed_of_sound_cm_s: f64,
    pub reliable_range_cm: f64,
    pub max_range_cm: f64,
    pub beyond_range_noise_cm: f64,
    pub within_range_noise_cm: f64,
}

impl Default for UltrasonicModel {
    fn default() -> Self {
        Self {
            speed_of_sound_cm_s: 34_300.0,
            reliable_range_cm: 100.0,
            max_range_cm: 400.0,
            beyond_range_noise_cm: 10.0,
            within_range_noise_cm: 0.0,
        }
    }
}

impl UltrasonicModel {
    pub fn validate(&self) -> Result<(), RobotError> {
        let ok = self.speed_of_sound_cm_s > 0.0
            && self.reliable_range_cm > 0.0
            && self.reliable_range_cm <= self.max_range_cm
            && self.max_range_cm.is_finite()
            && self.beyond_range_noise_cm >= 0.0
            && self.within_range_noise_cm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(RobotError::InvalidModel(format!("ultrasonic model {self:?}")))
        }
    }
}

/// Round-trip echo time to one-way distance: speed × time / 2.
pub fn echo_to_distance(echo_time_s: f64, model: &UltrasonicModel) -> Result<f64, RobotError> {
    if echo_time_s < 0.0 || echo_time_s.is_nan() {
        return Err(RobotError::NegativeTime(echo_time_s));
    }
    Ok(model.speed_of_sound_cm_s * echo_time_s / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reading {
    pub distance_cm: f64,
    pub reliable: bool,
}

/// Anything the range sensor can see. Out-of-bounds cells must report
/// occupied so the map border behaves like a wall.
pub trait RangeWorld {
    fn occupied(&self, cell: Cell) -> bool;
    fn cell_size_cm(&self) -> f64;
}

impl RangeWorld for GridMap {
    fn occupied(&self, cell: Cell) -> bool {
        !self.is_free(cell)
    }

    fn cell_size_cm(&self) -> f64 {
        GridMap::cell_size_cm(self)
    }
}

/// Exact distance from the robot's cell center to the nearest occupied cell
/// along `facing`, or `None` if nothing lies within `max_range_cm`. An
/// obstacle `k` cells ahead is `k * cell_size` away.
pub fn ray_distance(world: &impl RangeWorld, from: Cell, facing: Move, max_range_cm: f64) -> Option<f64> {
    let size = world.cell_size_cm();
    let mut cur = Some(from);
    let mut k = 0u32;
    loop {
        k += 1;
        let dist = f64::from(k) * size;
        if dist > max_range_cm {
            return None;
        }
        cur = cur.and_then(|c| c.step(facing));
        match cur {
            None => return Some(dist),
            Some(c) if world.occupied(c) => return Some(dist),
            Some(_) => {}
        }
    }
}

/// Front sensor reading along `facing`. Within the reliable range the
/// reading is the true distance plus in-range noise; past it the reading is
/// perturbed by gaussian noise truncated at three standard deviations (or
/// saturated at `max_range_cm`) and flagged unreliable.
pub fn ultrasonic_read<R: Rng + ?Sized>(
    world: &impl RangeWorld,
    state: &RobotState,
    facing: Move,
    model: &UltrasonicModel,
    rng: &mut R,
) -> Reading {
    match ray_distance(world, state.cell, facing, model.max_range_cm) {
        Some(d) if d <= model.reliable_range_cm => Reading {
            distance_cm: (d + gaussian(model.within_range_noise_cm, rng)).max(0.0),
            reliable: true,
        },
        Some(d) => Reading {
            distance_cm: (d + truncated_gaussian(model.beyond_range_noise_cm, rng))
                .clamp(0.0, model.max_range_cm),
            reliable: false,
        },
        None => Reading {
            distance_cm: model.max_range_cm,
            reliable: false,
        },
    }
}

fn truncated_gaussian<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    gaussian(sd, rng).clamp(-3.0 * sd, 3.0 * sd)
}

fn gaussian<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).expect("finite positive sd").sample(rng)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EncoderSpec {
    pub wheel_circumference_cm: f64,
    pub counts_per_revolution: u32,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            wheel_circumference_cm: 20.32,
            counts_per_revolution: 20,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<(), RobotError> {
        if self.wheel_circumference_cm > 0.0
            && self.wheel_circumference_cm.is_finite()
            && self.counts_per_revolution > 0
        {
            Ok(())
        } else {
            Err(RobotError::InvalidModel(format!("encoder spec {self:?}")))
        }
    }
}

/// Revolutions = distance / circumference.
pub fn revolutions(distance_cm: f64, spec: &EncoderSpec) -> Result<f64, RobotError> {
    if distance_cm < 0.0 || distance_cm.is_nan() {
        return Err(RobotError::NegativeDistance(distance_cm));
    }
    Ok(distance_cm / spec.wheel_circumference_cm)
}

/// Tick count = revolutions × counts per revolution, rounded to the nearest
/// whole count.
pub fn ticks_for_distance(distance_cm: f64, spec: &EncoderSpec) -> Result<u64, RobotError> {
    let revs = revolutions(distance_cm, spec)?;
    Ok((revs * f64::from(spec.counts_per_revolution)).round() as u64)
}

/// Noisy compass: true heading plus zero-mean gaussian noise, wrapped.
pub fn compass_read<R: Rng + ?Sized>(true_heading_deg: f64, noise_sd_deg: f64, rng: &mut R) -> f64 {
    normalize_deg(true_heading_deg + gaussian(noise_sd_deg, rng))
}

/// Lateral drift band, expressed per `per_distance_cm` of forward travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftModel {
    pub min_cm: f64,
    pub max_cm: f64,
    pub per_distance_cm: f64,
    /// Snap back to the cell centerline on arrival.
    pub recenter: bool,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            min_cm: 3.0,
            max_cm: 8.0,
            per_distance_cm: 50.0,
            recenter: true,
        }
    }
}

impl DriftModel {
    pub fn none() -> Self {
        Self {
            min_cm: 0.0,
            max_cm: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        if self.min_cm >= 0.0 && self.min_cm <= self.max_cm && self.max_cm.is_finite() && self.per_distance_cm > 0.0 {
            Ok(())
        } else {
            Err(RobotError::InvalidModel(format!("drift model {self:?}")))
        }
    }
}

/// Motor speed labels carried into traces; no electrical model sits behind
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MotionProfile {
    pub forward_pwm: u8,
    pub turn_pwm: u8,
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self {
            forward_pwm: 60,
            turn_pwm: 30,
        }
    }
}

/// Every sensor and actuator model used by a mission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobotModels {
    pub ultrasonic: UltrasonicModel,
    pub encoder: EncoderSpec,
    pub drift: DriftModel,
    pub compass_noise_sd_deg: f64,
    pub profile: MotionProfile,
}

impl Default for RobotModels {
    fn default() -> Self {
        Self {
            ultrasonic: UltrasonicModel::default(),
            encoder: EncoderSpec::default(),
            drift: DriftModel::default(),
            compass_noise_sd_deg: 0.5,
            profile: MotionProfile::default(),
        }
    }
}

impl RobotModels {
    /// Noise-free models: exact compass, no drift.
    pub fn ideal() -> Self {
        Self {
            drift: DriftModel::none(),
            compass_noise_sd_deg: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        self.ultrasonic.validate()?;
        self.encoder.validate()?;
        self.drift.validate()?;
        if !(self.compass_noise_sd_deg >= 0.0 && self.compass_noise_sd_deg.is_finite()) {
            return Err(RobotError::InvalidModel(format!(
                "compass noise sd {}",
                self.compass_noise_sd_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOutcome {
    pub state: RobotState,
    /// Signed lateral drift accrued on this motion.
    pub drift_cm: f64,
}

/// Advances one cell along `mv`. Heading is untouched; both wheel counters
/// grow by the tick count of one cell length.
pub fn forward_step<R: Rng + ?Sized>(
    state: &RobotState,
    mv: Move,
    map: &GridMap,
    models: &RobotModels,
    rng: &mut R,
) -> Result<ForwardOutcome, RobotError> {
    let target = state
        .cell
        .step(mv)
        .filter(|&c| map.is_free(c))
        .ok_or_else(|| RobotError::BlockedAhead(state.cell.step(mv).unwrap_or(state.cell)))?;
    let cell_cm = map.cell_size_cm();
    let drift = &models.drift;
    let drift_cm = if drift.max_cm > 0.0 {
        let scale = cell_cm / drift.per_distance_cm;
        let magnitude = rng.random_range(drift.min_cm..=drift.max_cm) * scale;
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    } else {
        0.0
    };
    let ticks = ticks_for_distance(cell_cm, &models.encoder)?;
    let mut next = *state;
    next.cell = target;
    next.lateral_offset_cm = if drift.recenter { 0.0 } else { drift_cm };
    next.encoder_counts = state.encoder_counts.map(|c| c + ticks);
    next.mode = Mode::Driving;
    Ok(ForwardOutcome { state: next, drift_cm })
}
