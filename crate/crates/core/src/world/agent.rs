use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::GridWorld;

/// Translation of one MOVE_FORWARD, in meters.
pub const FORWARD_STEP: f64 = 0.25;
/// Rotation of one TURN_LEFT / TURN_RIGHT, in degrees.
pub const TURN_STEP: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    /// Enum order doubles as the argmax tie-break order.
    pub const ALL: [Action; 4] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Action::MoveForward => "MOVE_FORWARD",
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
            Action::Stop => "STOP",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.symbol() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// True agent pose. Heading in degrees, counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        AgentState {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        ((p.0 - self.x).powi(2) + (p.1 - self.y).powi(2)).sqrt()
    }
}

pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Signed smallest difference `to - from` in degrees, in (-180, 180].
pub fn heading_delta(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Stochastic step offsets applied to motion actions when enabled.
#[derive(Debug, Clone)]
pub struct ActuationNoise {
    pub enabled: bool,
    /// Relative jitter on the forward distance (0.2 = ±20%).
    pub distance_jitter: f64,
    /// Absolute jitter on turns, in degrees.
    pub rotation_jitter: f64,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl ActuationNoise {
    pub fn new(enabled: bool, distance_jitter: f64, rotation_jitter: f64, rng_seed: u64) -> Self {
        ActuationNoise {
            enabled,
            distance_jitter: distance_jitter.abs(),
            rotation_jitter: rotation_jitter.abs(),
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn disabled() -> Self {
        Self::new(false, 0.0, 0.0, 0)
    }

    pub fn enabled(rng_seed: u64) -> Self {
        Self::new(true, 0.2, 3.0, rng_seed)
    }

    fn distance_factor(&mut self) -> f64 {
        if !self.enabled || self.distance_jitter == 0.0 {
            return 1.0;
        }
        1.0 + self
            .rng
            .random_range(-self.distance_jitter..=self.distance_jitter)
    }

    fn rotation_offset(&mut self) -> f64 {
        if !self.enabled || self.rotation_jitter == 0.0 {
            return 0.0;
        }
        self.rng
            .random_range(-self.rotation_jitter..=self.rotation_jitter)
    }
}

/// Transition function. A forward move whose end point is blocked or out of
/// bounds leaves the state unchanged.
pub fn step(
    world: &GridWorld,
    state: AgentState,
    action: Action,
    noise: &mut ActuationNoise,
) -> AgentState {
    match action {
        Action::MoveForward => {
            let dist = FORWARD_STEP * noise.distance_factor();
            let rad = state.heading.to_radians();
            let (nx, ny) = (state.x + dist * rad.cos(), state.y + dist * rad.sin());
            if world.is_free_point(nx, ny) {
                AgentState {
                    x: nx,
                    y: ny,
                    ..state
                }
            } else {
                state
            }
        }
        Action::TurnLeft => AgentState::new(
            state.x,
            state.y,
            state.heading + TURN_STEP + noise.rotation_offset(),
        ),
        Action::TurnRight => AgentState::new(
            state.x,
            state.y,
            state.heading - TURN_STEP + noise.rotation_offset(),
        ),
        Action::Stop => state,
    }
}
