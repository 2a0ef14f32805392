//! Occupancy grid, procedural world generation and the geodesic engine.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{heading_delta, step, Action, ActuationNoise, AgentState, TURN_STEP};
use super::WorldGenParams;
use crate::error::{Error, Result};

/// Grid cell as (col, row).
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub category: usize,
    pub cell: Cell,
}

/// Immutable navigation world. Free space, landmarks and the projection
/// used for embeddings are fixed at construction.
#[derive(Debug)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Row-major, `true` = blocked.
    pub occupancy: Vec<bool>,
    pub landmarks: Vec<Landmark>,
    pub seed: u64,
    pub params: WorldGenParams,
    landmark_fields: OnceLock<Vec<DistanceField>>,
    main_cells: OnceLock<Vec<Cell>>,
    projection: OnceLock<super::observe::Projection>,
}

impl Clone for GridWorld {
    fn clone(&self) -> Self {
        GridWorld::from_parts(
            self.width,
            self.height,
            self.cell_size,
            self.occupancy.clone(),
            self.landmarks.clone(),
            self.seed,
            self.params.clone(),
        )
    }
}

impl PartialEq for GridWorld {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.cell_size == other.cell_size
            && self.occupancy == other.occupancy
            && self.landmarks == other.landmarks
            && self.seed == other.seed
            && self.params == other.params
    }
}

/// The eight grid moves; the first four are orthogonal.
pub(crate) const MOVES: [(isize, isize); 8] = [
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

impl GridWorld {
    pub fn from_parts(
        width: usize,
        height: usize,
        cell_size: f64,
        occupancy: Vec<bool>,
        landmarks: Vec<Landmark>,
        seed: u64,
        params: WorldGenParams,
    ) -> Self {
        assert_eq!(occupancy.len(), width * height, "occupancy size");
        GridWorld {
            width,
            height,
            cell_size,
            occupancy,
            landmarks,
            seed,
            params,
            landmark_fields: OnceLock::new(),
            main_cells: OnceLock::new(),
            projection: OnceLock::new(),
        }
    }

    /// Open grid (borders included) with the given blocked cells; handy for tests.
    pub fn from_occupancy(
        width: usize,
        height: usize,
        occupancy: Vec<bool>,
        landmarks: Vec<Landmark>,
        seed: u64,
    ) -> Self {
        let params = WorldGenParams {
            width,
            height,
            ..WorldGenParams::default()
        };
        GridWorld::from_parts(
            width,
            height,
            params.cell_size,
            occupancy,
            landmarks,
            seed,
            params,
        )
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.1 * self.width + cell.0
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        (index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, col: isize, row: isize) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        cell.0 < self.width && cell.1 < self.height && !self.occupancy[self.index(cell)]
    }

    pub fn is_blocked_signed(&self, col: isize, row: isize) -> bool {
        !self.in_bounds(col, row) || self.occupancy[row as usize * self.width + col as usize]
    }

    /// Cell containing a metric point, if inside the bounds.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let col = (x / self.cell_size).floor() as usize;
        let row = (y / self.cell_size).floor() as usize;
        (col < self.width && row < self.height).then_some((col, row))
    }

    pub fn free_cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        self.cell_of(x, y).filter(|&c| self.is_free(c))
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.free_cell_of(x, y).is_some()
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.0 as f64 + 0.5) * self.cell_size,
            (cell.1 as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.occupancy.len())
            .filter(|&i| !self.occupancy[i])
            .map(|i| self.cell_at(i))
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    /// Neighbours reachable in one graph edge. Diagonals require both
    /// orthogonal cells to be free (no corner cutting).
    pub(crate) fn neighbors(&self, cell: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        let (c, r) = (cell.0 as isize, cell.1 as isize);
        MOVES.iter().enumerate().filter_map(move |(k, &(dc, dr))| {
            let (nc, nr) = (c + dc, r + dr);
            if self.is_blocked_signed(nc, nr) {
                return None;
            }
            let diagonal = k >= 4;
            if diagonal && (self.is_blocked_signed(c + dc, r) || self.is_blocked_signed(c, r + dr))
            {
                return None;
            }
            Some(((nc as usize, nr as usize), diagonal))
        })
    }

    /// Geodesic distance field from a set of source cells.
    pub fn distance_field(&self, sources: &[Cell]) -> DistanceField {
        DistanceField::compute(self, sources)
    }

    /// Shortest obstacle-avoiding distance between two metric points, with
    /// endpoints snapped to their cells. `f64::INFINITY` when disconnected.
    pub fn geodesic_distance(&self, a: (f64, f64), b: (f64, f64)) -> Result<f64> {
        let ca = self
            .free_cell_of(a.0, a.1)
            .ok_or(Error::InvalidPoint { x: a.0, y: a.1 })?;
        let cb = self
            .free_cell_of(b.0, b.1)
            .ok_or(Error::InvalidPoint { x: b.0, y: b.1 })?;
        if ca == cb {
            return Ok(0.0);
        }
        Ok(DistanceField::compute_until(self, &[ca], Some(cb)).meters(cb))
    }

    /// Distance fields from every landmark, computed once and shared.
    pub fn landmark_fields(&self) -> &[DistanceField] {
        self.landmark_fields.get_or_init(|| {
            self.landmarks
                .iter()
                .map(|l| self.distance_field(&[l.cell]))
                .collect()
        })
    }

    /// Free cells of the main component, in row-major order.
    pub fn main_cells(&self) -> &[Cell] {
        self.main_cells.get_or_init(|| {
            self.main_component()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| self.cell_at(i))
                .collect()
        })
    }

    pub(crate) fn projection(&self) -> &super::observe::Projection {
        self.projection.get_or_init(|| {
            super::observe::Projection::from_seed(
                self.seed,
                self.params.embedding_dim,
                self.params.categories,
            )
        })
    }

    /// Cells of the largest 8-connected free component (under the geodesic
    /// graph's connectivity rules).
    pub fn main_component(&self) -> Vec<bool> {
        let mut label = vec![usize::MAX; self.occupancy.len()];
        let mut best = (0usize, usize::MAX);
        let mut next = 0;
        for start in 0..self.occupancy.len() {
            if self.occupancy[start] || label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            let mut size = 0;
            while let Some(i) = stack.pop() {
                size += 1;
                for (n, _) in self.neighbors(self.cell_at(i)) {
                    let ni = self.index(n);
                    if label[ni] == usize::MAX {
                        label[ni] = next;
                        stack.push(ni);
                    }
                }
            }
            if size > best.0 {
                best = (size, next);
            }
            next += 1;
        }
        label.iter().map(|&l| l == best.1).collect()
    }

    pub fn free_count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| !b).count()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Steps {
    orth: u32,
    diag: u32,
}

impl Steps {
    const UNREACHED: Steps = Steps {
        orth: u32::MAX,
        diag: u32::MAX,
    };

    fn key(self) -> f64 {
        self.orth as f64 + self.diag as f64 * SQRT_2
    }
}

/// Per-cell geodesic distances from a source set. Distances are kept as
/// exact (orthogonal, diagonal) step counts and converted to meters on read.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    cell_size: f64,
    steps: Vec<Steps>,
    /// Index into the source list of the source that settled each cell.
    origin: Vec<u32>,
}

#[derive(PartialEq)]
struct QueueEntry {
    key: f64,
    index: usize,
    steps: Steps,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DistanceField {
    fn compute(world: &GridWorld, sources: &[Cell]) -> Self {
        Self::compute_until(world, sources, None)
    }

    fn compute_until(world: &GridWorld, sources: &[Cell], target: Option<Cell>) -> Self {
        let mut steps = vec![Steps::UNREACHED; world.occupancy.len()];
        let mut origin = vec![u32::MAX; world.occupancy.len()];
        let mut done = vec![false; world.occupancy.len()];
        let mut heap = BinaryHeap::new();
        for (k, &s) in sources.iter().enumerate() {
            if world.is_free(s) {
                let i = world.index(s);
                if origin[i] != u32::MAX {
                    continue;
                }
                origin[i] = k as u32;
                steps[i] = Steps { orth: 0, diag: 0 };
                heap.push(QueueEntry {
                    key: 0.0,
                    index: i,
                    steps: steps[i],
                });
            }
        }
        let target = target.map(|t| world.index(t));
        while let Some(QueueEntry {
            index, steps: s, ..
        }) = heap.pop()
        {
            if done[index] {
                continue;
            }
            done[index] = true;
            if Some(index) == target {
                break;
            }
            for (n, diagonal) in world.neighbors(world.cell_at(index)) {
                let ni = world.index(n);
                if done[ni] {
                    continue;
                }
                let cand = if diagonal {
                    Steps {
                        orth: s.orth,
                        diag: s.diag + 1,
                    }
                } else {
                    Steps {
                        orth: s.orth + 1,
                        diag: s.diag,
                    }
                };
                if steps[ni] == Steps::UNREACHED || cand.key() < steps[ni].key() {
                    steps[ni] = cand;
                    origin[ni] = origin[index];
                    heap.push(QueueEntry {
                        key: cand.key(),
                        index: ni,
                        steps: cand,
                    });
                }
            }
        }
        DistanceField {
            width: world.width,
            cell_size: world.cell_size,
            steps,
            origin,
        }
    }

    /// Distance in meters to `cell`, `f64::INFINITY` when unreachable.
    pub fn meters(&self, cell: Cell) -> f64 {
        let s = self.steps[cell.1 * self.width + cell.0];
        if s == Steps::UNREACHED {
            f64::INFINITY
        } else {
            self.cell_size * (s.orth as f64 + s.diag as f64 * SQRT_2)
        }
    }

    /// Distance at a metric point; `None` if the point is not on the grid.
    pub fn at_point(&self, world: &GridWorld, x: f64, y: f64) -> Option<f64> {
        world.free_cell_of(x, y).map(|c| self.meters(c))
    }

    pub fn is_reachable(&self, cell: Cell) -> bool {
        self.steps[cell.1 * self.width + cell.0] != Steps::UNREACHED
    }

    /// Position in the source list of the source nearest to `cell`. Ties go
    /// to whichever source Dijkstra settled first; duplicate sources keep the
    /// first occurrence.
    pub fn origin(&self, cell: Cell) -> Option<usize> {
        let o = self.origin[cell.1 * self.width + cell.0];
        (o != u32::MAX).then_some(o as usize)
    }

    fn step_counts(&self, cell: Cell) -> Steps {
        self.steps[cell.1 * self.width + cell.0]
    }
}

/// Cell path from `from` to the field's source, descending the field.
/// Among equally short continuations the move best aligned with the straight
/// line to `toward` wins.
pub(crate) fn descend(
    world: &GridWorld,
    field: &DistanceField,
    from: Cell,
    toward: Cell,
) -> Option<Vec<Cell>> {
    if !field.is_reachable(from) {
        return None;
    }
    let mut path = vec![from];
    let mut cur = from;
    loop {
        let s = field.step_counts(cur);
        if s.orth == 0 && s.diag == 0 {
            return Some(path);
        }
        let goal_dir = (
            toward.0 as f64 - cur.0 as f64,
            toward.1 as f64 - cur.1 as f64,
        );
        let mut best: Option<(Cell, f64)> = None;
        for (n, diagonal) in world.neighbors(cur) {
            let ns = field.step_counts(n);
            let fits = if diagonal {
                ns.orth == s.orth && ns.diag + 1 == s.diag
            } else {
                ns.diag == s.diag && ns.orth + 1 == s.orth
            };
            if !fits {
                continue;
            }
            let step = (n.0 as f64 - cur.0 as f64, n.1 as f64 - cur.1 as f64);
            let norm = (step.0 * step.0 + step.1 * step.1).sqrt()
                * (goal_dir.0 * goal_dir.0 + goal_dir.1 * goal_dir.1).sqrt();
            let align = if norm > 0.0 {
                (step.0 * goal_dir.0 + step.1 * goal_dir.1) / norm
            } else {
                0.0
            };
            if best.is_none_or(|(_, a)| align > a + 1e-12) {
                best = Some((n, align));
            }
        }
        let (next, _) = best?;
        path.push(next);
        cur = next;
    }
}

/// Expert reference from `start` to `goal`: the start pose followed by the
/// centers of the geodesic cell path, each heading toward its successor.
/// A goal already within the success radius yields `[start]`.
pub fn shortest_path(
    world: &GridWorld,
    start: AgentState,
    goal: (f64, f64),
) -> Result<Vec<AgentState>> {
    let sc = world
        .free_cell_of(start.x, start.y)
        .ok_or(Error::InvalidPoint {
            x: start.x,
            y: start.y,
        })?;
    let gc = world
        .free_cell_of(goal.0, goal.1)
        .ok_or(Error::InvalidPoint {
            x: goal.0,
            y: goal.1,
        })?;
    let field = world.distance_field(&[gc]);
    let total = field.meters(sc);
    if !total.is_finite() {
        return Err(Error::UnreachableGoal);
    }
    if total <= world.params.success_radius {
        return Ok(vec![start]);
    }
    let cells = descend(world, &field, sc, gc).ok_or(Error::UnreachableGoal)?;
    Ok(states_along(world, start, &cells[1..]))
}

/// Poses at the centers of `cells`, appended after `start`, headings facing
/// the next point; the final pose keeps the last travel heading.
pub(crate) fn states_along(
    world: &GridWorld,
    start: AgentState,
    cells: &[Cell],
) -> Vec<AgentState> {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(cells.len() + 1);
    points.push((start.x, start.y));
    points.extend(cells.iter().map(|&c| world.cell_center(c)));
    let mut out = Vec::with_capacity(points.len());
    out.push(start);
    let mut heading = start.heading;
    for i in 1..points.len() {
        if i + 1 < points.len() {
            heading = bearing_degrees(points[i], points[i + 1]);
        } else if i >= 1 {
            heading = bearing_degrees(points[i - 1], points[i]);
        }
        out.push(AgentState::new(points[i].0, points[i].1, heading));
    }
    out
}

/// Geodesic cell route from `from` to `to`, both included.
pub(crate) fn cell_route(world: &GridWorld, from: Cell, to: Cell) -> Result<Vec<Cell>> {
    let field = world.distance_field(&[to]);
    descend(world, &field, from, to).ok_or(Error::UnreachableGoal)
}

/// Poses visited by a noise-free follower walking `cells` from `start`
/// until it stands in the last cell. Every pose is one action after the
/// previous one.
///
/// The follower keeps a progress index into `cells`, advancing it to the
/// furthest of the next few cells that contains the agent, and steers toward
/// the center of the cell after it: a turn when the bearing is more than half
/// a turn step off, otherwise a forward move.
pub(crate) fn follow_cells(
    world: &GridWorld,
    start: AgentState,
    cells: &[Cell],
) -> Result<Vec<AgentState>> {
    const WINDOW: usize = 4;
    let last = cells.len().checked_sub(1).ok_or(Error::EmptyPath)?;
    let budget = 8 * cells.len() + 64;
    let mut quiet = ActuationNoise::disabled();
    let mut state = start;
    let mut poses = vec![start];
    let mut progress = 0usize;
    loop {
        let here = world
            .free_cell_of(state.x, state.y)
            .ok_or(Error::InvalidPoint {
                x: state.x,
                y: state.y,
            })?;
        if let Some(k) = (progress..=(progress + WINDOW).min(last))
            .rev()
            .find(|&k| cells[k] == here)
        {
            progress = k;
        }
        if progress == last {
            return Ok(poses);
        }
        if poses.len() > budget {
            return Err(Error::UnreachableGoal);
        }
        let target = world.cell_center(cells[progress + 1]);
        let delta = heading_delta(state.heading, bearing_degrees(state.position(), target));
        let action = if delta > TURN_STEP / 2.0 {
            Action::TurnLeft
        } else if delta < -TURN_STEP / 2.0 {
            Action::TurnRight
        } else {
            Action::MoveForward
        };
        let next = step(world, state, action, &mut quiet);
        if next == state {
            // blocked forward: the follower would retry forever
            return Err(Error::UnreachableGoal);
        }
        state = next;
        poses.push(state);
    }
}

/// Heading in degrees [0, 360) from `a` toward `b`, rounded to 1e-9 so that
/// grid-aligned directions come out as exact multiples of 45.
pub fn bearing_degrees(a: (f64, f64), b: (f64, f64)) -> f64 {
    let deg = (b.1 - a.1).atan2(b.0 - a.0).to_degrees();
    let deg = (deg * 1e9).round() / 1e9;
    super::agent::normalize_heading(deg)
}

/// Polyline length in meters.
pub fn path_length(path: &[AgentState]) -> f64 {
    path.windows(2)
        .map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt())
        .sum()
}

/// Procedurally generate a room-and-corridor world.
pub fn generate_world(seed: u64, params: &WorldGenParams) -> Result<GridWorld> {
    params.validate()?;
    const ATTEMPTS: u32 = 16;
    let mut last_reason = String::new();
    for attempt in 0..ATTEMPTS {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ attempt as u64);
        match try_generate(&mut rng, seed, params) {
            Ok(world) => return Ok(world),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailure {
        attempts: ATTEMPTS,
        reason: last_reason,
    })
}

#[derive(Clone, Copy)]
struct Room {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Room {
    fn center(&self) -> (usize, usize) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    fn overlaps(&self, other: &Room, margin: usize) -> bool {
        self.x0 < other.x1 + margin
            && other.x0 < self.x1 + margin
            && self.y0 < other.y1 + margin
            && other.y0 < self.y1 + margin
    }
}

fn try_generate(
    rng: &mut ChaCha8Rng,
    seed: u64,
    params: &WorldGenParams,
) -> std::result::Result<GridWorld, String> {
    let (w, h) = (params.width, params.height);
    let mut blocked = vec![true; w * h];
    let min_side = 10.min(w.saturating_sub(2)).max(3);
    let max_side = (w.min(h) / 3).max(min_side + 1);

    let mut rooms: Vec<Room> = Vec::new();
    let mut tries = 0;
    while rooms.len() < params.room_count && tries < 2000 {
        tries += 1;
        let rw = rng.random_range(min_side..=max_side);
        let rh = rng.random_range(min_side..=max_side);
        if rw + 2 >= w || rh + 2 >= h {
            continue;
        }
        let x0 = rng.random_range(1..w - rw - 1);
        let y0 = rng.random_range(1..h - rh - 1);
        let room = Room {
            x0,
            y0,
            x1: x0 + rw,
            y1: y0 + rh,
        };
        if rooms.iter().any(|r| r.overlaps(&room, 3)) {
            continue;
        }
        rooms.push(room);
    }
    if rooms.is_empty() {
        return Err("no room could be placed".into());
    }
    for r in &rooms {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                blocked[y * w + x] = false;
            }
        }
    }

    // Prim-style spanning tree over room centers, each edge an L-shaped corridor.
    let cw = params.corridor_width.max(1);
    let mut connected = vec![0usize];
    let mut pending: Vec<usize> = (1..rooms.len()).collect();
    while !pending.is_empty() {
        let mut best = (usize::MAX, 0, 0);
        for (pi, &p) in pending.iter().enumerate() {
            for &c in &connected {
                let (a, b) = (rooms[p].center(), rooms[c].center());
                let d = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
                if d < best.0 {
                    best = (d, pi, c);
                }
            }
        }
        let p = pending.swap_remove(best.1);
        let (a, b) = (rooms[p].center(), rooms[best.2].center());
        let horizontal_first = rng.random_bool(0.5);
        carve_corridor(&mut blocked, w, h, a, b, cw, horizontal_first);
        connected.push(p);
    }

    // Clutter: small pillars inside rooms, kept away from room borders.
    for r in &rooms {
        let area = (r.x1 - r.x0) * (r.y1 - r.y0);
        let pillars = area / 90;
        for _ in 0..pillars {
            if r.x1 - r.x0 < 8 || r.y1 - r.y0 < 8 {
                break;
            }
            let px = rng.random_range(r.x0 + 3..r.x1 - 4);
            let py = rng.random_range(r.y0 + 3..r.y1 - 4);
            let size = rng.random_range(1..=2);
            for y in py..py + size {
                for x in px..px + size {
                    blocked[y * w + x] = true;
                }
            }
        }
    }

    let mut world = GridWorld::from_parts(
        w,
        h,
        params.cell_size,
        blocked,
        Vec::new(),
        seed,
        params.clone(),
    );
    let main = world.main_component();
    let free = world.free_count();
    let in_main = main.iter().filter(|&&m| m).count();
    if free == 0 || (in_main as f64) < 0.8 * free as f64 {
        return Err(format!(
            "main component holds {in_main} of {free} free cells"
        ));
    }

    // Landmarks sit on free main-component cells, preferring cells along walls.
    let mut candidates: Vec<Cell> = Vec::new();
    let mut fallback: Vec<Cell> = Vec::new();
    for i in 0..main.len() {
        if !main[i] {
            continue;
        }
        let cell = world.cell_at(i);
        let near_wall = MOVES[..4]
            .iter()
            .any(|&(dc, dr)| world.is_blocked_signed(cell.0 as isize + dc, cell.1 as isize + dr));
        if near_wall {
            candidates.push(cell);
        } else {
            fallback.push(cell);
        }
    }
    let mut landmarks = Vec::with_capacity(params.landmark_count);
    let mut taken = std::collections::HashSet::new();
    while landmarks.len() < params.landmark_count {
        let pool = if candidates.len() > taken.len() {
            &candidates
        } else {
            &fallback
        };
        if pool.is_empty() {
            return Err("not enough free cells for landmarks".into());
        }
        let cell = pool[rng.random_range(0..pool.len())];
        // Keep landmarks apart so views stay distinguishable.
        let crowded = landmarks
            .iter()
            .any(|l: &Landmark| l.cell.0.abs_diff(cell.0) + l.cell.1.abs_diff(cell.1) < 6);
        if !taken.insert(cell) || (crowded && taken.len() < candidates.len() / 2) {
            continue;
        }
        landmarks.push(Landmark {
            id: landmarks.len() as u32,
            category: rng.random_range(0..params.categories),
            cell,
        });
    }
    world.landmarks = landmarks;
    Ok(world)
}

fn carve_corridor(
    blocked: &mut [bool],
    w: usize,
    h: usize,
    a: (usize, usize),
    b: (usize, usize),
    width: usize,
    horizontal_first: bool,
) {
    let half = width / 2;
    let mut carve = |x: usize, y: usize| {
        for dy in 0..width {
            for dx in 0..width {
                let cx = (x + dx).saturating_sub(half);
                let cy = (y + dy).saturating_sub(half);
                if cx >= 1 && cy >= 1 && cx + 1 < w && cy + 1 < h {
                    blocked[cy * w + cx] = false;
                }
            }
        }
    };
    let corner = if horizontal_first {
        (b.0, a.1)
    } else {
        (a.0, b.1)
    };
    for (from, to) in [(a, corner), (corner, b)] {
        let (mut x, mut y) = from;
        carve(x, y);
        while (x, y) != to {
            if x != to.0 {
                x = if to.0 > x { x + 1 } else { x - 1 };
            } else {
                y = if to.1 > y { y + 1 } else { y - 1 };
            }
            carve(x, y);
        }
    }
}
