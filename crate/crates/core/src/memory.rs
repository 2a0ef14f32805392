//! Adaptive memory refinement.
//!
//! A bank of at most `K` historical frames is selected greedily from a
//! candidate pool. Each pick maximizes
//!
//! ```text
//! λ_R · sim_sem(f, I) − (1 − λ_R) · (w_V · sim_vis(f, M) + w_T · sim_temp(f, M))
//! ```
//!
//! against the bank `M` built so far: relevance to the instruction, minus
//! penalties for looking like, or sitting close in time to, frames already
//! kept. Both penalties are zero while the bank is empty.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::AgentState;

/// Default memory bank size.
pub const DEFAULT_BANK_SIZE: usize = 8;
/// Frames held in the recent window before they spill into the pool.
pub const RECENT_WINDOW: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub timestamp: u64,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<AgentState>,
}

impl Frame {
    pub fn new(timestamp: u64, embedding: Vec<f64>) -> Self {
        Frame {
            timestamp,
            embedding,
            pose: None,
        }
    }
}

/// Selected frames in ascending timestamp order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryBank {
    frames: Vec<Frame>,
    capacity: usize,
}

impl MemoryBank {
    pub fn empty(capacity: usize) -> Self {
        MemoryBank {
            frames: Vec::new(),
            capacity,
        }
    }

    /// Sorts by timestamp; fails on duplicates or overflow.
    pub fn from_frames(mut frames: Vec<Frame>, capacity: usize) -> Result<Self> {
        if frames.len() > capacity {
            return Err(Error::InvalidParams(format!(
                "{} frames exceed bank capacity {capacity}",
                frames.len()
            )));
        }
        frames.sort_by_key(|f| f.timestamp);
        if frames.windows(2).any(|w| w[0].timestamp == w[1].timestamp) {
            return Err(Error::InvalidParams("duplicate timestamps in bank".into()));
        }
        Ok(MemoryBank { frames, capacity })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePool {
    frames: Vec<Frame>,
}

impl CandidatePool {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let mut ts: Vec<u64> = frames.iter().map(|f| f.timestamp).collect();
        ts.sort_unstable();
        if ts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("duplicate timestamps in pool".into()));
        }
        Ok(CandidatePool { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn push(&mut self, frame: Frame) {
        self.frames.push(frame);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub lambda_r: f64,
    pub w_v: f64,
    pub w_t: f64,
    pub epsilon: f64,
    pub k: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            lambda_r: 0.5,
            w_v: 0.5,
            w_t: 0.5,
            epsilon: 1.0,
            k: DEFAULT_BANK_SIZE,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_r) {
            return Err(Error::InvalidParams(format!(
                "lambda_r {} not in [0, 1]",
                self.lambda_r
            )));
        }
        if self.w_v < 0.0 || self.w_t < 0.0 || (self.w_v + self.w_t - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "w_v ({}) and w_t ({}) must be non-negative and sum to 1",
                self.w_v, self.w_t
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams("epsilon must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("bank size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cosine similarity; zero vectors are rejected.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length.
pub fn normalize(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Semantic relevance of a frame to the instruction embedding.
pub fn sim_sem(frame: &Frame, instruction: &[f64]) -> Result<f64> {
    cosine(&frame.embedding, instruction)
}

/// Largest cosine between the frame and any bank frame; 0 for an empty bank.
pub fn sim_vis(frame: &Frame, bank: &MemoryBank) -> f64 {
    bank.frames
        .iter()
        .map(|m| cosine(&frame.embedding, &m.embedding).unwrap_or(0.0))
        .fold(None, |acc: Option<f64>, c| {
            Some(acc.map_or(c, |a| a.max(c)))
        })
        .unwrap_or(0.0)
}

/// `1 / (min |t_f − t_m| + ε)`; 0 for an empty bank.
pub fn sim_temp(frame: &Frame, bank: &MemoryBank, epsilon: f64) -> f64 {
    bank.frames
        .iter()
        .map(|m| frame.timestamp.abs_diff(m.timestamp))
        .min()
        .map_or(0.0, |gap| temporal_term(gap, epsilon))
}

#[inline]
fn temporal_term(gap: u64, epsilon: f64) -> f64 {
    1.0 / (gap as f64 + epsilon)
}

#[inline]
fn combine(sem: f64, vis: f64, temp: f64, p: &RefineParams) -> f64 {
    p.lambda_r * sem - (1.0 - p.lambda_r) * (p.w_v * vis + p.w_t * temp)
}

/// Objective value of adding `frame` to `bank`.
pub fn frame_score(
    frame: &Frame,
    bank: &MemoryBank,
    instruction: &[f64],
    p: &RefineParams,
) -> Result<f64> {
    let sem = sim_sem(frame, instruction)?;
    Ok(combine(
        sem,
        sim_vis(frame, bank),
        sim_temp(frame, bank, p.epsilon),
        p,
    ))
}

/// Greedy selection shared by the batch and streaming paths. `cos(i, j)` is
/// the cosine between candidate `i` and already-selected candidate `j`.
/// Returns selected indices in pick order.
fn greedy_select(
    timestamps: &[u64],
    relevance: &[f64],
    cos: impl Fn(usize, usize) -> f64,
    p: &RefineParams,
) -> Vec<usize> {
    let n = timestamps.len();
    let k = p.k.min(n);
    let mut selected = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut max_vis = vec![f64::NEG_INFINITY; n];
    let mut min_gap = vec![u64::MAX; n];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let (vis, temp) = if selected.is_empty() {
                (0.0, 0.0)
            } else {
                (max_vis[i], temporal_term(min_gap[i], p.epsilon))
            };
            let score = combine(relevance[i], vis, temp, p);
            let better = match best {
                None => true,
                Some((b, bs)) => score > bs || (score == bs && timestamps[i] < timestamps[b]),
            };
            if better {
                best = Some((i, score));
            }
        }
        let Some((pick, _)) = best else { break };
        taken[pick] = true;
        selected.push(pick);
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let c = cos(i, pick);
            if c > max_vis[i] {
                max_vis[i] = c;
            }
            min_gap[i] = min_gap[i].min(timestamps[i].abs_diff(timestamps[pick]));
        }
    }
    selected
}

fn bank_from_indices(frames: &[Frame], mut picks: Vec<usize>, capacity: usize) -> MemoryBank {
    picks.sort_by_key(|&i| frames[i].timestamp);
    MemoryBank {
        frames: picks.into_iter().map(|i| frames[i].clone()).collect(),
        capacity,
    }
}

/// Greedy bank selection over the whole pool.
pub fn refine(pool: &CandidatePool, instruction: &[f64], p: &RefineParams) -> Result<MemoryBank> {
    p.validate()?;
    let frames = pool.frames();
    let timestamps: Vec<u64> = frames.iter().map(|f| f.timestamp).collect();
    let relevance = frames
        .iter()
        .map(|f| sim_sem(f, instruction))
        .collect::<Result<Vec<_>>>()?;
    let picks = greedy_select(
        &timestamps,
        &relevance,
        |i, j| cosine(&frames[i].embedding, &frames[j].embedding).unwrap_or(0.0),
        p,
    );
    Ok(bank_from_indices(frames, picks, p.k))
}

/// `k` frames at evenly spaced positions of the timestamp-ordered pool.
pub fn uniform_sample(pool: &CandidatePool, k: usize) -> Result<MemoryBank> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let frames = pool.frames();
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| frames[i].timestamp);
    let n = frames.len();
    let picks: Vec<usize> = if n <= k {
        (0..n).collect()
    } else if k == 1 {
        vec![(n - 1) / 2]
    } else {
        (0..k)
            .map(|i| (i * (n - 1) + (k - 1) / 2) / (k - 1))
            .collect()
    };
    Ok(MemoryBank {
        frames: picks
            .into_iter()
            .map(|i| frames[order[i]].clone())
            .collect(),
        capacity: k,
    })
}

/// Per-episode online memory: recent window, spilled pool and current bank.
///
/// The bank after every update equals `refine(pool, e_I, p)`. Relevance and
/// pairwise cosines of pool frames are cached so each update costs
/// `O(|pool| · K)` instead of `O(|pool| · K · d)`.
#[derive(Debug, Clone)]
pub struct StreamState {
    pool: CandidatePool,
    recent: VecDeque<Frame>,
    bank: MemoryBank,
    window: usize,
    cache_instruction: Vec<f64>,
    relevance: Vec<f64>,
    /// `gram[i][j]` for `j < i`: cosine between pool frames `i` and `j`.
    gram: Vec<Vec<f64>>,
    last_timestamp: Option<u64>,
}

impl StreamState {
    pub fn new(capacity: usize) -> Self {
        Self::with_window(capacity, RECENT_WINDOW)
    }

    pub fn with_window(capacity: usize, window: usize) -> Self {
        StreamState {
            pool: CandidatePool::default(),
            recent: VecDeque::with_capacity(window + 1),
            bank: MemoryBank::empty(capacity),
            window,
            cache_instruction: Vec::new(),
            relevance: Vec::new(),
            gram: Vec::new(),
            last_timestamp: None,
        }
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    pub fn recent(&self) -> impl ExactSizeIterator<Item = &Frame> {
        self.recent.iter()
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    /// Push a new frame into the recent window, spill the oldest into the
    /// pool once the window overflows, and re-select the bank.
    pub fn update_online(
        &mut self,
        frame: Frame,
        instruction: &[f64],
        p: &RefineParams,
    ) -> Result<()> {
        self.push(frame, instruction)?;
        p.validate()?;
        let timestamps: Vec<u64> = self.pool.frames().iter().map(|f| f.timestamp).collect();
        let gram = &self.gram;
        let picks = greedy_select(
            &timestamps,
            &self.relevance,
            |i, j| if i > j { gram[i][j] } else { gram[j][i] },
            p,
        );
        self.bank = bank_from_indices(self.pool.frames(), picks, p.k);
        Ok(())
    }

    /// Like [`update_online`](Self::update_online) but the bank is chosen by
    /// uniform sampling over the same pool.
    pub fn update_uniform(&mut self, frame: Frame, instruction: &[f64], k: usize) -> Result<()> {
        let spilled = self.push(frame, instruction)?;
        if spilled || self.bank.capacity() != k {
            self.bank = uniform_sample(&self.pool, k)?;
        }
        Ok(())
    }

    /// Window bookkeeping only; the bank stays empty.
    pub fn update_without_bank(&mut self, frame: Frame, instruction: &[f64]) -> Result<()> {
        self.push(frame, instruction).map(|_| ())
    }

    fn push(&mut self, frame: Frame, instruction: &[f64]) -> Result<bool> {
        if let Some(last) = self.last_timestamp {
            if frame.timestamp <= last {
                return Err(Error::NonMonotonicTimestamp {
                    got: frame.timestamp,
                    last,
                });
            }
        }
        if self.cache_instruction.as_slice() != instruction {
            self.cache_instruction = instruction.to_vec();
            self.relevance = self
                .pool
                .frames()
                .iter()
                .map(|f| sim_sem(f, instruction))
                .collect::<Result<_>>()?;
        }
        self.last_timestamp = Some(frame.timestamp);
        self.recent.push_back(frame);
        if self.recent.len() <= self.window {
            return Ok(false);
        }
        let spilled = self.recent.pop_front().expect("window overflow");
        let rel = sim_sem(&spilled, instruction)?;
        let row = self
            .pool
            .frames()
            .iter()
            .map(|m| cosine(&spilled.embedding, &m.embedding).unwrap_or(0.0))
            .collect();
        self.relevance.push(rel);
        self.gram.push(row);
        self.pool.push(spilled);
        Ok(true)
    }
}

/// How the bank is filled during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    /// Greedy refinement after every frame.
    #[default]
    Amr,
    /// Evenly spaced frames from the same pool.
    Uniform,
    /// No bank; only the recent window.
    None,
}

impl MemoryMode {
    pub const ALL: [MemoryMode; 3] = [MemoryMode::None, MemoryMode::Uniform, MemoryMode::Amr];

    pub fn name(self) -> &'static str {
        match self {
            MemoryMode::Amr => "amr",
            MemoryMode::Uniform => "uniform",
            MemoryMode::None => "none",
        }
    }
}

impl std::fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MemoryMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        MemoryMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown memory mode `{s}` (expected amr, uniform or none)"))
    }
}

impl StreamState {
    /// Dispatch on `mode`.
    pub fn update(
        &mut self,
        mode: MemoryMode,
        frame: Frame,
        instruction: &[f64],
        p: &RefineParams,
    ) -> Result<()> {
        match mode {
            MemoryMode::Amr => self.update_online(frame, instruction, p),
            MemoryMode::Uniform => self.update_uniform(frame, instruction, p.k),
            MemoryMode::None => self.update_without_bank(frame, instruction),
        }
    }
}
