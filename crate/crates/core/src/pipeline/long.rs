use crate::error::{Error, Result};
use crate::world::{stitch_episodes, Episode, GridWorld};

use super::config::LongHorizonParams;

/// Stitch pairs of episodes into a long-horizon split. Each episode is taken
/// in order as the first leg and joined to the first partner, in split order,
/// whose start lies within `max_gap` of its goal and whose goal is more than
/// `min_length` from its start. Every episode leads at most one pair.
pub fn build_long_horizon(
    world: &GridWorld,
    episodes: &[Episode],
    params: &LongHorizonParams,
    count: usize,
    first_id: u64,
) -> Result<Vec<Episode>> {
    let cell = |p: (f64, f64)| {
        world
            .free_cell_of(p.0, p.1)
            .ok_or(Error::InvalidPoint { x: p.0, y: p.1 })
    };
    let mut out = Vec::with_capacity(count);
    for (i, e1) in episodes.iter().enumerate() {
        if out.len() == count {
            break;
        }
        let from_goal = world.distance_field(&[cell(e1.goal)?]);
        let from_start = world.distance_field(&[cell(e1.start.position())?]);
        for (j, e2) in episodes.iter().enumerate() {
            if i == j {
                continue;
            }
            let gap = from_goal.meters(cell(e2.start.position())?);
            let direct = from_start.meters(cell(e2.goal)?);
            if !(gap <= params.max_gap && direct > params.min_length) {
                continue;
            }
            // Paths whose end pose sits on a cell boundary are rejected.
            let Ok(mut stitched) = stitch_episodes(world, e1, e2, params.max_gap) else {
                continue;
            };
            stitched.id = first_id + out.len() as u64;
            out.push(stitched);
            break;
        }
    }
    if out.len() < count {
        return Err(Error::InsufficientEpisodes(format!(
            "stitched {} of {count} long-horizon episodes from {} candidates",
            out.len(),
            episodes.len()
        )));
    }
    Ok(out)
}

/// Mean shortest geodesic length of a split.
pub fn mean_shortest_length(episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes
        .iter()
        .map(|e| e.shortest_geodesic_length)
        .sum::<f64>()
        / episodes.len() as f64
}
