use std::collections::HashMap;

use super::features::{ActionChunk, CHUNK_LEN};
use crate::error::{Error, Result};
use crate::world::{
    bearing_degrees, heading_delta, step, Action, ActuationNoise, AgentState, Cell, DistanceField,
    GridWorld, FORWARD_STEP,
};

/// Half the turn increment; smaller bearing errors are walked through.
pub const BEARING_THRESHOLD: f64 = 7.5;

/// Targets closer than half a step are skipped; under actuation noise the
/// next pose can sit right beside or behind the agent.
const MIN_TARGET_DISTANCE: f64 = FORWARD_STEP / 2.0;

/// Half a unit in the last stored decimal of a pose coordinate.
const ROUNDING: f64 = 5e-4;

/// Shortest-path follower bound to one expert path. Distance fields to the
/// goal and to the path are computed once, so per-state queries are cheap.
#[derive(Debug, Clone)]
pub struct Expert<'w> {
    world: &'w GridWorld,
    path: Vec<AgentState>,
    success_radius: f64,
    goal_field: DistanceField,
    path_field: DistanceField,
    /// Distinct path cells, in the order given to the path field.
    cells: Vec<Cell>,
    /// Ascending path indices of the poses inside each path cell.
    poses_in: HashMap<Cell, Vec<usize>>,
}

impl<'w> Expert<'w> {
    pub fn new(world: &'w GridWorld, path: &[AgentState], success_radius: f64) -> Result<Self> {
        let goal = path.last().ok_or(Error::EmptyPath)?;
        let goal_cell = world
            .free_cell_of(goal.x, goal.y)
            .ok_or(Error::InvalidPoint {
                x: goal.x,
                y: goal.y,
            })?;
        let mut cells: Vec<Cell> = Vec::new();
        let mut poses_in: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, s) in path.iter().enumerate() {
            if world.free_cell_of(s.x, s.y).is_none() {
                return Err(Error::InvalidPoint { x: s.x, y: s.y });
            }
            // A stored pose rounded across a cell boundary claims both cells.
            for (dx, dy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                let Some(c) = world.free_cell_of(s.x + dx * ROUNDING, s.y + dy * ROUNDING) else {
                    continue;
                };
                let entry = poses_in.entry(c).or_default();
                if entry.is_empty() {
                    cells.push(c);
                }
                if entry.last() != Some(&i) {
                    entry.push(i);
                }
            }
        }
        Ok(Expert {
            world,
            path: path.to_vec(),
            success_radius,
            goal_field: world.distance_field(&[goal_cell]),
            path_field: world.distance_field(&cells),
            cells,
            poses_in,
        })
    }

    pub fn path(&self) -> &[AgentState] {
        &self.path
    }

    fn cell(&self, state: &AgentState) -> Result<Cell> {
        self.world
            .free_cell_of(state.x, state.y)
            .ok_or(Error::StateInObstacle {
                x: state.x,
                y: state.y,
            })
    }

    /// Geodesic distance from `state` to the path's final pose.
    pub fn goal_distance(&self, state: &AgentState) -> Result<f64> {
        Ok(self.goal_field.meters(self.cell(state)?))
    }

    /// Minimum geodesic distance from `state` to any expert state.
    pub fn deviation(&self, state: &AgentState) -> Result<f64> {
        Ok(self.path_field.meters(self.cell(state)?))
    }

    /// Index of the nearest expert state: within the geodesically nearest
    /// path cell, the pose closest to `state`, earliest on ties.
    pub fn nearest_index(&self, state: &AgentState) -> Result<usize> {
        let cell = self.cell(state)?;
        let nearest_cell = self
            .path_field
            .origin(cell)
            .map(|k| self.cells[k])
            .ok_or(Error::UnreachableExpertPath)?;
        let mut best = (usize::MAX, f64::INFINITY);
        for &i in &self.poses_in[&nearest_cell] {
            let d = state.distance_to(self.path[i].position());
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn action(&self, state: &AgentState) -> Result<Action> {
        let to_goal = self.goal_distance(state)?;
        if !to_goal.is_finite() {
            return Err(Error::UnreachableExpertPath);
        }
        if to_goal <= self.success_radius {
            return Ok(Action::Stop);
        }
        let nearest = self.nearest_index(state)?;
        let Some(target) = self
            .path
            .iter()
            .skip(nearest + 2)
            .find(|s| state.distance_to(s.position()) > MIN_TARGET_DISTANCE)
        else {
            return Ok(Action::MoveForward);
        };
        let bearing = bearing_degrees(state.position(), target.position());
        let delta = heading_delta(state.heading, bearing);
        Ok(if delta > BEARING_THRESHOLD {
            Action::TurnLeft
        } else if delta < -BEARING_THRESHOLD {
            Action::TurnRight
        } else {
            Action::MoveForward
        })
    }

    /// The next four expert actions from `state`, simulated without noise.
    pub fn chunk(&self, state: &AgentState) -> Result<ActionChunk> {
        let mut actions = Vec::with_capacity(CHUNK_LEN);
        let mut s = *state;
        let mut quiet = ActuationNoise::disabled();
        for _ in 0..CHUNK_LEN {
            let a = self.action(&s)?;
            actions.push(a);
            if a == Action::Stop {
                break;
            }
            s = step(self.world, s, a, &mut quiet);
        }
        Ok(ActionChunk::from_prefix(&actions))
    }
}

/// One expert decision. Builds the distance fields on every call; use
/// [`Expert`] when querying many states of the same path.
pub fn expert_action(
    world: &GridWorld,
    state: &AgentState,
    expert_path: &[AgentState],
    success_radius: f64,
) -> Result<Action> {
    Expert::new(world, expert_path, success_radius)?.action(state)
}
