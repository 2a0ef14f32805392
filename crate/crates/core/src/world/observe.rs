//! Synthetic egocentric observations and instruction embeddings.
//!
//! Both live in the same `d`-dimensional space: a fixed, seed-derived
//! projection of a small semantic vector. For frames that vector holds one
//! slot per landmark category (weighted by `1 / (1 + distance)` for every
//! visible landmark) followed by the blocked fraction of the view cone and the
//! heading fraction. Instructions fill only the category slots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::agent::{heading_delta, AgentState};
use super::grid::GridWorld;
use crate::error::{Error, Result};
use crate::memory::{normalize, Frame};

/// Positional decay applied to the k-th instruction waypoint.
pub const WAYPOINT_DECAY: f64 = 0.9;

/// Row-major `d × (categories + 2)` Gaussian projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Projection {
    pub fn from_seed(seed: u64, dim: usize, categories: usize) -> Self {
        let cols = categories + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_EED0_F9A0_1EC7);
        let data = (0..dim * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Projection {
            rows: dim,
            cols,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn input_dim(&self) -> usize {
        self.cols
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Heading as a fraction in (0, 1]; due east maps to 1 so the semantic
/// vector is never all-zero.
pub fn heading_fraction(heading: f64) -> f64 {
    if heading <= 0.0 {
        1.0
    } else {
        heading / 360.0
    }
}

/// Whether the straight segment between two points crosses a blocked cell.
/// Samples every quarter cell; the endpoint cells themselves are ignored.
pub fn line_of_sight(world: &GridWorld, from: (f64, f64), to: (f64, f64)) -> bool {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = (dx * dx + dy * dy).sqrt();
    let samples = ((len / (world.cell_size * 0.25)).ceil() as usize).max(1);
    let start = world.cell_of(from.0, from.1);
    let end = world.cell_of(to.0, to.1);
    (1..samples).all(|i| {
        let t = i as f64 / samples as f64;
        let p = (from.0 + t * dx, from.1 + t * dy);
        match world.cell_of(p.0, p.1) {
            Some(c) if Some(c) == start || Some(c) == end => true,
            Some(c) => world.is_free(c),
            None => false,
        }
    })
}

fn in_cone(state: &AgentState, target: (f64, f64), half_fov: f64) -> bool {
    let bearing = (target.1 - state.y).atan2(target.0 - state.x).to_degrees();
    heading_delta(state.heading, bearing).abs() <= half_fov
}

/// Pre-projection semantic vector of an egocentric view.
pub fn view_vector(world: &GridWorld, state: &AgentState) -> Vec<f64> {
    let categories = world.params.categories;
    let range = world.params.view_range;
    let half_fov = world.params.fov_degrees / 2.0;
    let mut v = vec![0.0; categories + 2];

    for l in &world.landmarks {
        let c = world.cell_center(l.cell);
        let dist = state.distance_to(c);
        if dist > range {
            continue;
        }
        if dist > 1e-9 && !in_cone(state, c, half_fov) {
            continue;
        }
        if !line_of_sight(world, state.position(), c) {
            continue;
        }
        v[l.category] += 1.0 / (1.0 + dist);
    }

    // Blocked fraction over cells whose centers fall inside the cone.
    let reach = (range / world.cell_size).ceil() as isize + 1;
    let here = (
        (state.x / world.cell_size).floor() as isize,
        (state.y / world.cell_size).floor() as isize,
    );
    let (mut total, mut blocked) = (0usize, 0usize);
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (col, row) = (here.0 + dc, here.1 + dr);
            let center = (
                (col as f64 + 0.5) * world.cell_size,
                (row as f64 + 0.5) * world.cell_size,
            );
            let dist = state.distance_to(center);
            if dist > range || dist < 1e-9 || !in_cone(state, center, half_fov) {
                continue;
            }
            total += 1;
            if world.is_blocked_signed(col, row) {
                blocked += 1;
            }
        }
    }
    v[categories] = if total == 0 {
        0.0
    } else {
        blocked as f64 / total as f64
    };
    v[categories + 1] = heading_fraction(state.heading);
    v
}

/// Egocentric observation at step `t`.
pub fn observe(world: &GridWorld, state: &AgentState, t: u64) -> Frame {
    let v = view_vector(world, state);
    let mut e = world.projection().apply(&v);
    normalize(&mut e).expect("heading slot keeps the view vector non-zero");
    Frame {
        timestamp: t,
        embedding: e,
        pose: Some(*state),
    }
}

/// Instruction embedding from an ordered list of waypoint landmarks.
pub fn instruction_embedding(world: &GridWorld, waypoint_ids: &[u32]) -> Result<Vec<f64>> {
    if waypoint_ids.is_empty() {
        return Err(Error::EmptyWaypoints);
    }
    let mut u = vec![0.0; world.params.categories + 2];
    let mut weight = 1.0;
    for &id in waypoint_ids {
        let l = world.landmark(id).ok_or(Error::UnknownLandmark(id))?;
        u[l.category] += weight;
        weight *= WAYPOINT_DECAY;
    }
    let mut e = world.projection().apply(&u);
    normalize(&mut e)?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::cosine;
    use crate::world::grid::Landmark;

    fn room(w: usize, h: usize, landmarks: Vec<Landmark>) -> GridWorld {
        let mut occ = vec![false; w * h];
        for c in 0..w {
            occ[c] = true;
            occ[(h - 1) * w + c] = true;
        }
        for r in 0..h {
            occ[r * w] = true;
            occ[r * w + w - 1] = true;
        }
        GridWorld::from_occupancy(w, h, occ, landmarks, 42)
    }

    #[test]
    fn observation_is_pure_and_unit_norm() {
        let world = room(
            30,
            30,
            vec![Landmark {
                id: 0,
                category: 3,
                cell: (20, 15),
            }],
        );
        let s = AgentState::new(3.0, 3.8, 30.0);
        let a = observe(&world, &s, 5);
        let b = observe(&world, &s, 5);
        assert_eq!(a, b);
        let n: f64 = a.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
        assert_eq!(a.embedding.len(), world.params.embedding_dim);
    }

    #[test]
    fn facing_wall_has_no_landmark_block() {
        let world = room(
            30,
            30,
            vec![Landmark {
                id: 0,
                category: 3,
                cell: (20, 15),
            }],
        );
        // cell (1, 15), facing the west wall 0.25 m away
        let s = AgentState::new(0.375, 3.875, 180.0);
        let v = view_vector(&world, &s);
        assert!(v[..world.params.categories].iter().all(|&x| x == 0.0));
        assert!(v[world.params.categories] > 0.0);
        let mut expected = world.projection().apply(&v);
        normalize(&mut expected).unwrap();
        assert_eq!(observe(&world, &s, 0).embedding, expected);
    }

    #[test]
    fn single_visible_landmark_weight() {
        let world = room(
            30,
            30,
            vec![Landmark {
                id: 0,
                category: 3,
                cell: (12, 15),
            }],
        );
        let c = world.cell_center((12, 15));
        let s = AgentState::new(c.0 - 1.0, c.1, 0.0);
        let v = view_vector(&world, &s);
        assert!((v[3] - 0.5).abs() < 1e-12);
        // hand-evaluated formula: blocked fraction 0 in the open room, heading slot 1
        let mut hand = vec![0.0; world.params.categories + 2];
        hand[3] = 0.5;
        hand[world.params.categories] = v[world.params.categories];
        hand[world.params.categories + 1] = 1.0;
        assert_eq!(v, hand);
        // behind the agent: invisible
        let back = AgentState::new(c.0 - 1.0, c.1, 180.0);
        assert_eq!(view_vector(&world, &back)[3], 0.0);
    }

    #[test]
    fn walls_block_line_of_sight() {
        let mut world = room(
            30,
            30,
            vec![Landmark {
                id: 0,
                category: 2,
                cell: (14, 15),
            }],
        );
        world.occupancy[15 * 30 + 12] = true;
        let c = world.cell_center((14, 15));
        let s = AgentState::new(c.0 - 1.0, c.1, 0.0);
        assert_eq!(view_vector(&world, &s)[2], 0.0);
    }

    #[test]
    fn instruction_embedding_rules() {
        let world = room(
            30,
            30,
            vec![
                Landmark {
                    id: 0,
                    category: 3,
                    cell: (5, 5),
                },
                Landmark {
                    id: 1,
                    category: 7,
                    cell: (9, 9),
                },
            ],
        );
        assert!(matches!(
            instruction_embedding(&world, &[]),
            Err(Error::EmptyWaypoints)
        ));
        assert!(matches!(
            instruction_embedding(&world, &[9]),
            Err(Error::UnknownLandmark(9))
        ));
        let e = instruction_embedding(&world, &[0]).unwrap();
        let mut onehot = vec![0.0; world.params.categories + 2];
        onehot[3] = 1.0;
        let raw = world.projection().apply(&onehot);
        assert!((cosine(&e, &raw).unwrap() - 1.0).abs() < 1e-12);
        let two = instruction_embedding(&world, &[0, 1]).unwrap();
        let mut u = vec![0.0; world.params.categories + 2];
        u[3] = 1.0;
        u[7] = 0.9;
        let mut expected = world.projection().apply(&u);
        normalize(&mut expected).unwrap();
        assert_eq!(two, expected);
    }
}
