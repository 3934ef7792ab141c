//! Key-point coverage for a grid-world robot.
//!
//! The stack plans a closed tour over key points (A* leg costs, simulated
//! annealing over visiting orders), then drives a simulated robot along it
//! with compass heading control, encoder-measured forward motions and an
//! ultrasonic range sensor, stopping, probing and replanning around dynamic
//! obstacles.

pub mod avoidance;
pub mod control;
pub mod map;
pub mod pathfind;
pub mod render;
pub mod robot;
pub mod scenario;
pub mod sim;
pub mod tour;
pub mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stochastic component. Its name is written into
/// trace headers so runs can be matched to the algorithm that produced them.
pub type SimRng = ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8";

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
