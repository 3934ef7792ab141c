//! Compass guidance: rotate in fixed steps until the heading reads within
//! tolerance of the target bearing, then drive forward one cell.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::map::{GridMap, Move};
use crate::robot::{
    compass_read, forward_step, normalize_deg, signed_angle_diff, BearingConfig, Mode, RobotError,
    RobotModels, RobotState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("heading not within tolerance after {0} turn ticks")]
    TurnTimeout(u32),
    #[error("invalid control configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Robot(#[from] RobotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum HeadingCommand {
    TurnLeft,
    TurnRight,
    Forward,
}

impl HeadingCommand {
    pub fn label(self) -> &'static str {
        match self {
            HeadingCommand::TurnLeft => "turn_left",
            HeadingCommand::TurnRight => "turn_right",
            HeadingCommand::Forward => "forward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlConfig {
    pub bearing_tolerance_deg: f64,
    pub turn_step_deg: f64,
    pub max_turn_ticks: u32,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            bearing_tolerance_deg: 2.0,
            turn_step_deg: 5.0,
            max_turn_ticks: 144,
        }
    }
}

impl ControlConfig {
    /// Rejects step sizes that can jump over the whole acceptance window.
    /// Over whole-degree errors the window `[-tol, tol]` holds `2*tol + 1`
    /// values, so any step up to that size lands inside it.
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidConfig(m));
        let tol = self.bearing_tolerance_deg;
        let step = self.turn_step_deg;
        if !(tol > 0.0 && tol < 180.0) {
            return bad(format!("bearing_tolerance_deg must lie in (0,180), got {tol}"));
        }
        if !(step > 0.0 && step <= 180.0) {
            return bad(format!("turn_step_deg must lie in (0,180], got {step}"));
        }
        if step > 2.0 * tol + 1.0 {
            return bad(format!(
                "turn_step_deg {step} can overshoot the ±{tol}° window; use at most {}",
                2.0 * tol + 1.0
            ));
        }
        if self.max_turn_ticks < self.half_turn_ticks() {
            return bad(format!(
                "max_turn_ticks {} is below the {} needed for a half turn",
                self.max_turn_ticks,
                self.half_turn_ticks()
            ));
        }
        Ok(())
    }

    /// Worst-case turn ticks from any heading with an exact compass:
    /// `ceil(180 / step) + 1`.
    pub fn half_turn_ticks(&self) -> u32 {
        (180.0 / self.turn_step_deg).ceil() as u32 + 1
    }
}

pub fn moves_to_bearings(moves: &[Move], bearings: &BearingConfig) -> Vec<f64> {
    moves.iter().map(|&m| bearings.bearing(m)).collect()
}

/// Forward when the reading is within tolerance of the target; otherwise
/// turn the short way round (clockwise on an exact half turn).
pub fn heading_decision(measured_deg: f64, target_deg: f64, cfg: &ControlConfig) -> HeadingCommand {
    let e = signed_angle_diff(measured_deg, target_deg);
    if e.abs() <= cfg.bearing_tolerance_deg {
        HeadingCommand::Forward
    } else if e > 0.0 {
        HeadingCommand::TurnRight
    } else {
        HeadingCommand::TurnLeft
    }
}

/// Rotates by one turn step. Forward leaves the state unchanged.
pub fn apply_turn(state: &RobotState, cmd: HeadingCommand, cfg: &ControlConfig) -> RobotState {
    let mut next = *state;
    let delta = match cmd {
        HeadingCommand::TurnRight => cfg.turn_step_deg,
        HeadingCommand::TurnLeft => -cfg.turn_step_deg,
        HeadingCommand::Forward => return next,
    };
    next.heading_deg = normalize_deg(state.heading_deg + delta);
    next.mode = Mode::Turning;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlTick {
    pub measured_deg: f64,
    pub command: HeadingCommand,
    pub heading_after_deg: f64,
    pub drift_cm: f64,
}

/// Turns toward `mv`'s bearing, re-reading the compass every tick, then
/// drives one cell forward.
pub fn execute_move<R: Rng + ?Sized>(
    state: &RobotState,
    mv: Move,
    bearings: &BearingConfig,
    cfg: &ControlConfig,
    models: &RobotModels,
    map: &GridMap,
    rng: &mut R,
) -> Result<(RobotState, Vec<ControlTick>), ControlError> {
    let target = bearings.bearing(mv);
    let mut cur = *state;
    let mut log = Vec::new();
    let mut turns = 0u32;
    loop {
        let measured = compass_read(cur.heading_deg, models.compass_noise_sd_deg, rng);
        match heading_decision(measured, target, cfg) {
            HeadingCommand::Forward => {
                let out = forward_step(&cur, mv, map, models, rng)?;
                log.push(ControlTick {
                    measured_deg: measured,
                    command: HeadingCommand::Forward,
                    heading_after_deg: out.state.heading_deg,
                    drift_cm: out.drift_cm,
                });
                return Ok((out.state, log));
            }
            turn => {
                if turns >= cfg.max_turn_ticks {
                    return Err(ControlError::TurnTimeout(turns));
                }
                turns += 1;
                cur = apply_turn(&cur, turn, cfg);
                log.push(ControlTick {
                    measured_deg: measured,
                    command: turn,
                    heading_after_deg: cur.heading_deg,
                    drift_cm: 0.0,
                });
            }
        }
    }
}
