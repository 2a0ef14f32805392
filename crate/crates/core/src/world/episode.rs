use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::AgentState;
use super::grid::{cell_route, follow_cells, path_length, Cell, GridWorld};
use super::observe::instruction_embedding;
use crate::error::{Error, Result};

const CATEGORY_NAMES: [&str; 16] = [
    "sofa",
    "plant",
    "fridge",
    "bookshelf",
    "bed",
    "sink",
    "television",
    "piano",
    "fireplace",
    "staircase",
    "bathtub",
    "painting",
    "lamp",
    "washer",
    "desk",
    "mirror",
];

pub fn category_name(category: usize) -> String {
    CATEGORY_NAMES
        .get(category)
        .map_or_else(|| format!("object-{category}"), |s| s.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub waypoint_landmark_ids: Vec<u32>,
    pub text: String,
    pub embedding: Vec<f64>,
}

impl Instruction {
    pub fn new(world: &GridWorld, waypoint_landmark_ids: Vec<u32>) -> Result<Self> {
        let embedding = instruction_embedding(world, &waypoint_landmark_ids)?;
        let text = instruction_text(world, &waypoint_landmark_ids);
        Ok(Instruction {
            waypoint_landmark_ids,
            text,
            embedding,
        })
    }
}

fn instruction_text(world: &GridWorld, ids: &[u32]) -> String {
    let names: Vec<String> = ids
        .iter()
        .filter_map(|&id| world.landmark(id))
        .map(|l| format!("the {}", category_name(l.category)))
        .collect();
    match names.as_slice() {
        [] => String::new(),
        [only] => format!("Walk to {only} and stop."),
        [init @ .., last] => format!(
            "Walk past {}, then stop near {last}.",
            init.join(", then past ")
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    pub world_seed: u64,
    pub start: AgentState,
    pub goal: (f64, f64),
    pub expert_path: Vec<AgentState>,
    pub instruction: Instruction,
    pub shortest_geodesic_length: f64,
}

impl Episode {
    pub fn expert_path_length(&self) -> f64 {
        path_length(&self.expert_path)
    }
}

/// Start/goal separation band and retry budget for episode sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeParams {
    pub min_length: f64,
    pub max_length: f64,
    pub max_attempts: u32,
    pub min_waypoints: usize,
    pub max_waypoints: usize,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        EpisodeParams {
            min_length: 5.0,
            max_length: 15.0,
            max_attempts: 200,
            min_waypoints: 2,
            max_waypoints: 5,
        }
    }
}

impl EpisodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_length >= 0.0 && self.max_length >= self.min_length) {
            return Err(Error::InvalidParams("episode length band is empty".into()));
        }
        if self.min_waypoints == 0 || self.max_waypoints < self.min_waypoints {
            return Err(Error::InvalidParams("waypoint count band is empty".into()));
        }
        Ok(())
    }
}

/// Mixes a base seed with a stream id into an independent seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample one episode. The same `(world, seed, params)` always yields the
/// same episode; `seed` doubles as the episode id.
pub fn generate_episode(world: &GridWorld, seed: u64, params: &EpisodeParams) -> Result<Episode> {
    params.validate()?;
    if world.landmarks.len() < 2 {
        return Err(Error::InvalidParams(
            "episode generation needs at least 2 landmarks".into(),
        ));
    }
    let cells = world.main_cells();
    if cells.is_empty() {
        return Err(Error::SamplingFailure(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(world.seed, seed));
    for _ in 0..params.max_attempts {
        let start_cell = cells[rng.random_range(0..cells.len())];
        let field = world.distance_field(&[start_cell]);
        let goals: Vec<_> = cells
            .iter()
            .copied()
            .filter(|&c| {
                let d = field.meters(c);
                d >= params.min_length && d <= params.max_length
            })
            .collect();
        if goals.is_empty() {
            continue;
        }
        let goal_cell = goals[rng.random_range(0..goals.len())];
        let heading = 15.0 * rng.random_range(0..24) as f64;
        let (sx, sy) = world.cell_center(start_cell);
        let start = AgentState::new(sx, sy, heading);
        let goal = world.cell_center(goal_cell);
        let route = cell_route(world, start_cell, goal_cell)?;
        let Ok(expert_path) = expert_rollout(world, start, &route) else {
            continue;
        };
        let length = field.meters(goal_cell);
        let Some(waypoints) = pick_waypoints(world, &expert_path, length, params) else {
            continue;
        };
        return Ok(Episode {
            id: seed,
            world_seed: world.seed,
            start,
            goal,
            expert_path,
            instruction: Instruction::new(world, waypoints)?,
            shortest_geodesic_length: length,
        });
    }
    Err(Error::SamplingFailure(params.max_attempts))
}

/// Landmarks geodesically nearest to evenly spaced points along the path,
/// the last point being the goal. Consecutive repeats collapse.
fn pick_waypoints(
    world: &GridWorld,
    path: &[AgentState],
    length: f64,
    params: &EpisodeParams,
) -> Option<Vec<u32>> {
    let n = ((length / 3.0).ceil() as usize).clamp(params.min_waypoints, params.max_waypoints);
    let total = path_length(path);
    let fields = world.landmark_fields();
    let mut ids: Vec<u32> = Vec::with_capacity(n);
    for k in 1..=n {
        let (x, y) = point_at(path, total * k as f64 / n as f64);
        let cell = world.free_cell_of(x, y)?;
        let nearest = world
            .landmarks
            .iter()
            .zip(fields)
            .map(|(l, f)| (f.meters(cell), l.id))
            .filter(|(d, _)| d.is_finite())
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))?;
        if ids.last() != Some(&nearest.1) {
            ids.push(nearest.1);
        }
    }
    (ids.len() >= params.min_waypoints.min(world.landmarks.len())).then_some(ids)
}

fn point_at(path: &[AgentState], s: f64) -> (f64, f64) {
    let mut acc = 0.0;
    for w in path.windows(2) {
        let seg = w[0].distance_to(w[1].position());
        if acc + seg >= s && seg > 0.0 {
            let t = (s - acc) / seg;
            return (
                w[0].x + t * (w[1].x - w[0].x),
                w[0].y + t * (w[1].y - w[0].y),
            );
        }
        acc += seg;
    }
    path.last().map(|p| p.position()).unwrap_or_default()
}

/// Poses as they read back from disk, so stored and generated episodes agree.
fn quantized(s: AgentState) -> AgentState {
    let r = |v: f64| {
        format!("{v:.3}")
            .parse::<f64>()
            .expect("formatted float parses")
    };
    AgentState::new(r(s.x), r(s.y), r(s.heading))
}

/// Noise-free walk along `route`, rejected when rounding would move the final
/// pose out of the goal cell.
fn expert_rollout(world: &GridWorld, start: AgentState, route: &[Cell]) -> Result<Vec<AgentState>> {
    let path: Vec<AgentState> = follow_cells(world, start, route)?
        .into_iter()
        .map(quantized)
        .collect();
    let end = path.last().ok_or(Error::EmptyPath)?;
    let goal = route.last().copied();
    let margin = 1e-3;
    for (dx, dy) in [
        (-margin, -margin),
        (-margin, margin),
        (margin, -margin),
        (margin, margin),
    ] {
        if world.free_cell_of(end.x + dx, end.y + dy) != goal {
            return Err(Error::UnreachableGoal);
        }
    }
    Ok(path)
}

/// The same route walked backwards: start and goal swap, poses reverse with
/// headings turned around, waypoints reverse.
pub fn reverse_episode(world: &GridWorld, e: &Episode) -> Result<Episode> {
    let expert_path: Vec<AgentState> = e
        .expert_path
        .iter()
        .rev()
        .map(|s| quantized(AgentState::new(s.x, s.y, s.heading + 180.0)))
        .collect();
    let start = expert_path[0];
    let mut ids = e.instruction.waypoint_landmark_ids.clone();
    ids.reverse();
    Ok(Episode {
        id: e.id,
        world_seed: e.world_seed,
        start,
        goal: e.start.position(),
        expert_path,
        instruction: Instruction::new(world, ids)?,
        shortest_geodesic_length: e.shortest_geodesic_length,
    })
}

/// Concatenate two episodes of the same world, bridging `e1.goal → e2.start`
/// with a geodesic connector no longer than `max_gap`.
pub fn stitch_episodes(
    world: &GridWorld,
    e1: &Episode,
    e2: &Episode,
    max_gap: f64,
) -> Result<Episode> {
    if e1.world_seed != e2.world_seed {
        return Err(Error::DifferentWorld(e1.world_seed, e2.world_seed));
    }
    if e1.world_seed != world.seed {
        return Err(Error::DifferentWorld(e1.world_seed, world.seed));
    }
    let gap = world.geodesic_distance(e1.goal, e2.start.position())?;
    if !(gap <= max_gap) {
        return Err(Error::GapTooLarge { gap, max_gap });
    }
    let cell = |p: (f64, f64)| {
        world
            .free_cell_of(p.0, p.1)
            .ok_or(Error::InvalidPoint { x: p.0, y: p.1 })
    };
    let mut route: Vec<Cell> = Vec::new();
    for (from, to) in [
        (e1.start.position(), e1.goal),
        (e1.goal, e2.start.position()),
        (e2.start.position(), e2.goal),
    ] {
        let leg = cell_route(world, cell(from)?, cell(to)?)?;
        let skip = usize::from(route.last() == leg.first());
        route.extend_from_slice(&leg[skip..]);
    }
    let expert_path = expert_rollout(world, e1.start, &route)?;
    let mut ids = e1.instruction.waypoint_landmark_ids.clone();
    for &id in &e2.instruction.waypoint_landmark_ids {
        if ids.last() != Some(&id) {
            ids.push(id);
        }
    }
    let shortest = world.geodesic_distance(e1.start.position(), e2.goal)?;
    Ok(Episode {
        id: e1.id,
        world_seed: e1.world_seed,
        start: e1.start,
        goal: e2.goal,
        expert_path,
        instruction: Instruction::new(world, ids)?,
        shortest_geodesic_length: shortest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, WorldGenParams};

    fn world() -> GridWorld {
        generate_world(7, &WorldGenParams::default()).unwrap()
    }

    #[test]
    fn episodes_are_deterministic_and_in_band() {
        let w = world();
        let p = EpisodeParams::default();
        let a = generate_episode(&w, 3, &p).unwrap();
        let b = generate_episode(&w, 3, &p).unwrap();
        assert_eq!(a, b);
        for seed in 0..40 {
            let e = generate_episode(&w, seed, &p).unwrap();
            assert!((5.0..=15.0).contains(&e.shortest_geodesic_length));
            assert_eq!(e.expert_path[0], e.start);
            let last = e.expert_path.last().unwrap();
            assert!(
                w.geodesic_distance(last.position(), e.goal).unwrap() <= w.params.success_radius
            );
            let geo = w.geodesic_distance(e.start.position(), e.goal).unwrap();
            assert_eq!(geo, e.shortest_geodesic_length);
            let n = e.instruction.waypoint_landmark_ids.len();
            assert!((2..=5).contains(&n));
        }
    }

    #[test]
    fn too_few_landmarks_is_rejected() {
        let params = WorldGenParams {
            landmark_count: 1,
            ..WorldGenParams::default()
        };
        let w = generate_world(7, &params).unwrap();
        assert!(generate_episode(&w, 0, &EpisodeParams::default()).is_err());
    }

    #[test]
    fn reversal_is_an_involution() {
        let w = world();
        let e = generate_episode(&w, 5, &EpisodeParams::default()).unwrap();
        let r = reverse_episode(&w, &e).unwrap();
        assert_eq!(r.shortest_geodesic_length, e.shortest_geodesic_length);
        assert_eq!(r.goal, e.start.position());
        let mut ids = e.instruction.waypoint_landmark_ids.clone();
        ids.reverse();
        assert_eq!(
            r.instruction.embedding,
            instruction_embedding(&w, &ids).unwrap()
        );
        let rr = reverse_episode(&w, &r).unwrap();
        for (a, b) in rr.expert_path.iter().zip(&e.expert_path) {
            assert_eq!((a.x, a.y), (b.x, b.y));
            assert!(crate::world::heading_delta(a.heading, b.heading).abs() < 1e-9);
        }
        assert_eq!(rr.instruction, e.instruction);
    }

    #[test]
    fn stitching_rules() {
        let w = world();
        let p = EpisodeParams::default();
        let e1 = generate_episode(&w, 1, &p).unwrap();
        // e2 starting exactly at e1's goal
        let mut e2 = generate_episode(&w, 2, &p).unwrap();
        e2.start = AgentState::new(e1.goal.0, e1.goal.1, 0.0);
        let s = stitch_episodes(&w, &e1, &e2, 2.0).unwrap();
        assert_eq!(s.expert_path[0], e1.start);
        let end = s.expert_path.last().unwrap();
        assert_eq!(
            w.free_cell_of(end.x, end.y),
            w.free_cell_of(e2.goal.0, e2.goal.1)
        );
        let direct = w.geodesic_distance(e1.start.position(), e2.goal).unwrap();
        assert_eq!(s.shortest_geodesic_length, direct);
        assert!(s.expert_path_length() + 1e-9 >= direct - w.cell_size * 2.0);
        assert!(s
            .instruction
            .waypoint_landmark_ids
            .starts_with(&e1.instruction.waypoint_landmark_ids));

        let far = generate_episode(&w, 9, &p).unwrap();
        let gap = w.geodesic_distance(e1.goal, far.start.position()).unwrap();
        if gap > 2.0 {
            assert!(matches!(
                stitch_episodes(&w, &e1, &far, 2.0),
                Err(Error::GapTooLarge { .. })
            ));
        }

        let mut other = e2.clone();
        other.world_seed += 1;
        assert!(matches!(
            stitch_episodes(&w, &e1, &other, 2.0),
            Err(Error::DifferentWorld(..))
        ));
    }
}
