use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{AgentState, Cell, DistanceField, GridWorld};

/// Outcome of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: u64,
    pub success: bool,
    /// Whether the policy emitted STOP (as opposed to stalling or timing out).
    pub stopped: bool,
    pub stop_geodesic_to_goal: f64,
    /// Left out of stored result files; traces carry the poses.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agent_path: Vec<AgentState>,
    pub agent_path_length: f64,
    pub shortest_length: f64,
    pub steps_taken: u64,
    pub min_goal_distance_along_path: f64,
    pub ndtw: f64,
    pub cumulative_return: f64,
}

impl EpisodeResult {
    pub fn spl(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        self.shortest_length / self.agent_path_length.max(self.shortest_length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sr: f64,
    pub spl: f64,
    pub ne: f64,
    pub os: f64,
    pub ndtw: f64,
    pub n_episodes: usize,
    pub fingerprint: String,
}

/// Means of the per-episode metrics. Each mean is accumulated in episode-id
/// order so the report does not depend on the order of `results`.
pub fn compute_metrics(results: &[EpisodeResult], success_radius: f64) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut sorted: Vec<&EpisodeResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        a.episode_id
            .cmp(&b.episode_id)
            .then(a.ndtw.total_cmp(&b.ndtw))
    });
    let n = sorted.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| sorted.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(MetricsReport {
        sr: mean(&|r| f64::from(u8::from(r.success))),
        spl: mean(&|r| r.spl()),
        ne: mean(&|r| r.stop_geodesic_to_goal),
        os: mean(&|r| f64::from(u8::from(r.min_goal_distance_along_path <= success_radius))),
        ndtw: mean(&|r| r.ndtw),
        n_episodes: sorted.len(),
        fingerprint: String::new(),
    })
}

/// Dynamic time warping cost of aligning sequences of length `n` and `m`.
pub fn dtw(n: usize, m: usize, mut cost: impl FnMut(usize, usize) -> f64) -> f64 {
    if n == 0 || m == 0 {
        return f64::INFINITY;
    }
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = cost(i - 1, j - 1) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Geodesic distances from each distinct reference cell.
pub struct ReferenceFields {
    cells: Vec<Cell>,
    fields: HashMap<Cell, DistanceField>,
}

impl ReferenceFields {
    pub fn new(world: &GridWorld, reference: &[AgentState]) -> Result<Self> {
        let mut cells = Vec::with_capacity(reference.len());
        let mut fields = HashMap::new();
        for s in reference {
            let c = world
                .free_cell_of(s.x, s.y)
                .ok_or(Error::InvalidPoint { x: s.x, y: s.y })?;
            cells.push(c);
            fields
                .entry(c)
                .or_insert_with(|| world.distance_field(&[c]));
        }
        Ok(ReferenceFields { cells, fields })
    }

    fn distance(&self, j: usize, cell: Cell) -> f64 {
        self.fields[&self.cells[j]].meters(cell)
    }
}

/// `exp(−DTW / (|ref| · d_th))` under geodesic ground costs.
pub fn ndtw(
    world: &GridWorld,
    path: &[AgentState],
    reference: &[AgentState],
    d_th: f64,
) -> Result<f64> {
    if path.is_empty() || reference.is_empty() {
        return Err(Error::EmptyPath);
    }
    let fields = ReferenceFields::new(world, reference)?;
    ndtw_with(world, path, &fields, d_th)
}

pub fn ndtw_with(
    world: &GridWorld,
    path: &[AgentState],
    fields: &ReferenceFields,
    d_th: f64,
) -> Result<f64> {
    if path.is_empty() || fields.cells.is_empty() {
        return Err(Error::EmptyPath);
    }
    let cells = path
        .iter()
        .map(|s| {
            world
                .free_cell_of(s.x, s.y)
                .ok_or(Error::InvalidPoint { x: s.x, y: s.y })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = fields.cells.len();
    let cost = dtw(cells.len(), m, |i, j| fields.distance(j, cells[i]));
    Ok((-cost / (m as f64 * d_th)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(id: u64, success: bool, len: f64, shortest: f64, min_goal: f64) -> EpisodeResult {
        EpisodeResult {
            episode_id: id,
            success,
            stopped: true,
            stop_geodesic_to_goal: if success { 1.0 } else { 6.0 },
            agent_path: vec![],
            agent_path_length: len,
            shortest_length: shortest,
            steps_taken: 10,
            min_goal_distance_along_path: min_goal,
            ndtw: 0.5,
            cumulative_return: 0.0,
        }
    }

    #[test]
    fn double_length_success_has_half_spl() {
        let r = result(0, true, 20.0, 10.0, 1.0);
        assert_eq!(r.spl(), 0.5);
        let m = compute_metrics(&[r], 3.0).unwrap();
        assert_eq!(m.spl, 0.5);
        assert_eq!(m.sr, 1.0);
    }

    #[test]
    fn immediate_stop_scores_zero() {
        let r = result(0, false, 0.0, 8.0, 8.0);
        let m = compute_metrics(&[r], 3.0).unwrap();
        assert_eq!((m.sr, m.spl, m.os), (0.0, 0.0, 0.0));
        assert!(matches!(
            compute_metrics(&[], 3.0),
            Err(Error::EmptyResults)
        ));
    }

    #[test]
    fn single_points_at_three_meters() {
        let w = GridWorld::from_occupancy(40, 5, vec![false; 200], vec![], 0);
        let a = AgentState::new(w.cell_center((2, 2)).0, w.cell_center((2, 2)).1, 0.0);
        let b = AgentState::new(w.cell_center((14, 2)).0, w.cell_center((14, 2)).1, 0.0);
        let v = ndtw(&w, &[a], &[b], 3.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367_879_4).abs() < 1e-7);
        assert_eq!(ndtw(&w, &[a, b], &[a, b], 3.0).unwrap(), 1.0);
        assert!(matches!(ndtw(&w, &[], &[a], 3.0), Err(Error::EmptyPath)));
    }

    fn naive_dtw(c: &[Vec<f64>]) -> f64 {
        let (n, m) = (c.len(), c[0].len());
        let mut d = vec![vec![f64::INFINITY; m]; n];
        for i in 0..n {
            for j in 0..m {
                let prev = if i == 0 && j == 0 {
                    0.0
                } else {
                    let mut best = f64::INFINITY;
                    if i > 0 {
                        best = best.min(d[i - 1][j]);
                    }
                    if j > 0 {
                        best = best.min(d[i][j - 1]);
                    }
                    if i > 0 && j > 0 {
                        best = best.min(d[i - 1][j - 1]);
                    }
                    best
                };
                d[i][j] = c[i][j] + prev;
            }
        }
        d[n - 1][m - 1]
    }

    proptest! {
        #[test]
        fn dtw_matches_full_table(c in (1usize..12, 1usize..12).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, m), n)
        })) {
            let fast = dtw(c.len(), c[0].len(), |i, j| c[i][j]);
            prop_assert_eq!(fast, naive_dtw(&c));
        }

        #[test]
        fn metrics_ignore_result_order(
            rows in proptest::collection::vec((any::<bool>(), 1.0f64..30.0, 1.0f64..30.0, 0.0f64..10.0), 1..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let results: Vec<EpisodeResult> = rows
                .iter()
                .enumerate()
                .map(|(i, &(s, l, sh, g))| result(i as u64, s, l, sh, g))
                .collect();
            let mut shuffled = results.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = compute_metrics(&results, 3.0).unwrap();
            let b = compute_metrics(&shuffled, 3.0).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.spl <= a.sr);
            prop_assert!((0.0..=1.0).contains(&a.sr) && (0.0..=1.0).contains(&a.spl));
        }
    }
}
