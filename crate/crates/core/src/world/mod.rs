//! Synthetic POMDP navigation environment.

mod agent;
mod episode;
mod grid;
pub mod io;
mod observe;

pub use agent::{
    heading_delta, normalize_heading, step, Action, ActuationNoise, AgentState, FORWARD_STEP,
    TURN_STEP,
};
pub use episode::{
    category_name, derive_seed, generate_episode, reverse_episode, stitch_episodes, Episode,
    EpisodeParams, Instruction,
};
pub use grid::{
    bearing_degrees, generate_world, path_length, shortest_path, Cell, DistanceField, GridWorld,
    Landmark,
};
pub use observe::{
    heading_fraction, instruction_embedding, line_of_sight, observe, view_vector, Projection,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldGenParams {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub room_count: usize,
    /// Corridor width in cells.
    pub corridor_width: usize,
    pub landmark_count: usize,
    pub categories: usize,
    pub fov_degrees: f64,
    pub view_range: f64,
    pub success_radius: f64,
    pub embedding_dim: usize,
}

impl Default for WorldGenParams {
    fn default() -> Self {
        WorldGenParams {
            width: 96,
            height: 96,
            cell_size: 0.25,
            room_count: 8,
            corridor_width: 4,
            landmark_count: 24,
            categories: 16,
            fov_degrees: 90.0,
            view_range: 3.0,
            success_radius: 3.0,
            embedding_dim: 64,
        }
    }
}

impl WorldGenParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.width > 2
            && self.height > 2
            && self.cell_size > 0.0
            && self.room_count > 0
            && self.corridor_width > 0
            && self.categories > 0
            && self.fov_degrees > 0.0
            && self.view_range > 0.0
            && self.success_radius > 0.0
            && self.embedding_dim > 0;
        if !positive {
            return Err(Error::InvalidParams(
                "world parameters must be positive".into(),
            ));
        }
        if self.fov_degrees > 360.0 {
            return Err(Error::InvalidParams(
                "fov must not exceed 360 degrees".into(),
            ));
        }
        Ok(())
    }
}
