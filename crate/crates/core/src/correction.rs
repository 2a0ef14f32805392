//! Trust-region correction data and the vanilla DAgger baseline.
//!
//! The learned policy drives the agent; at every visited state the deviation
//! `DM` (geodesic distance to the nearest expert state) is measured. States
//! with `δ < DM ≤ τ` are labelled by the expert, and the first state with
//! `DM > τ` ends the episode. DAgger labels every state and never aborts.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{RolloutConfig, StepStatus, Walker};
use crate::jsonl::{self, Header, SCHEMA_VERSION};
use crate::memory::Frame;
use crate::policy::{ActionChunk, Expert, FeatureVector, Policy, Sample};
use crate::world::{Action, ActuationNoise, AgentState, Episode, GridWorld};

pub const CORRECTION_KIND: &str = "corrections";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionConfig {
    /// Trust-region radius in meters.
    pub tau: f64,
    /// Deviations at or below this count as on-path.
    pub on_path_tolerance: f64,
    pub t_max: u64,
    pub seeds: Vec<u64>,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        CollectionConfig {
            tau: 3.0,
            on_path_tolerance: 0.05,
            t_max: 500,
            seeds: vec![0],
        }
    }
}

impl CollectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.on_path_tolerance > 0.0
            && self.on_path_tolerance < self.tau
            && self.tau.is_finite())
        {
            return Err(Error::InvalidParams(format!(
                "need 0 < on_path_tolerance < tau, got {} and {}",
                self.on_path_tolerance, self.tau
            )));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidParams("t_max must be positive".into()));
        }
        Ok(())
    }
}

/// An expert label at a state the learned policy visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionPair {
    pub episode_id: u64,
    pub step_index: u64,
    pub state: AgentState,
    pub expert_action: Action,
    pub frame: Frame,
    pub deviation: f64,
    /// Expert continuation from `state`, used as the training target.
    pub chunk: ActionChunk,
    /// Policy input at `state`, stored in single precision.
    pub features: Vec<f32>,
}

impl StateActionPair {
    pub fn sample(&self) -> Sample {
        Sample {
            features: FeatureVector(self.features.iter().map(|&x| f64::from(x)).collect()),
            chunk: self.chunk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collector {
    TrustRegion,
    Dagger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub episode_id: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub collector: Collector,
    pub policy_checkpoint: String,
    pub tau: f64,
    pub on_path_tolerance: f64,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    /// Episodes ended by the `DM > τ` rule.
    pub aborted: Vec<u64>,
    pub failures: Vec<EpisodeFailure>,
    /// Set when the pair list was cut to a budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionDataset {
    pub schema: String,
    pub pairs: Vec<StateActionPair>,
    pub provenance: Vec<Provenance>,
}

impl Default for CorrectionDataset {
    fn default() -> Self {
        CorrectionDataset {
            schema: SCHEMA_VERSION.into(),
            pairs: Vec::new(),
            provenance: Vec::new(),
        }
    }
}

impl CorrectionDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.pairs.iter().map(StateActionPair::sample).collect()
    }

    /// First `n` pairs, for matched-budget comparisons.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.pairs.truncate(n);
        for p in &mut out.provenance {
            p.truncated_to = Some(n);
        }
        out
    }
}

/// `DM(s) = min over expert states s* of d_g(s, s*)`.
pub fn deviation_metric(
    world: &GridWorld,
    state: &AgentState,
    expert_path: &[AgentState],
) -> Result<f64> {
    if world.free_cell_of(state.x, state.y).is_none() {
        return Err(Error::StateInObstacle {
            x: state.x,
            y: state.y,
        });
    }
    Expert::new(world, expert_path, world.params.success_radius)?.deviation(state)
}

/// Per-episode record of a collection run: the pairs plus the full state log
/// used for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeCollection {
    pub episode_id: u64,
    pub pairs: Vec<StateActionPair>,
    /// Every visited state with its deviation, in order.
    pub log: Vec<(AgentState, f64)>,
    pub aborted: bool,
}

fn make_pair(walker: &Walker<'_>, expert: &Expert<'_>, dm: f64) -> Result<StateActionPair> {
    let s = walker.state();
    let mut frame = walker.frame().clone();
    frame.pose = None;
    Ok(StateActionPair {
        episode_id: walker.episode.id,
        step_index: walker.t(),
        state: s,
        expert_action: expert.action(&s)?,
        frame,
        deviation: dm,
        chunk: expert.chunk(&s)?,
        features: walker.features()?.0.iter().map(|&x| x as f32).collect(),
    })
}

/// Roll `policy` through one episode under `collector` rules.
pub fn collect_episode(
    world: &GridWorld,
    episode: &Episode,
    policy: &dyn Policy,
    collector: Collector,
    cfg: &CollectionConfig,
    rollout: &RolloutConfig,
) -> Result<EpisodeCollection> {
    let rollout = RolloutConfig {
        t_max: cfg.t_max,
        ..rollout.clone()
    };
    let expert = Expert::new(world, &episode.expert_path, world.params.success_radius)?;
    let mut walker = Walker::new(world, episode, &rollout, ActuationNoise::disabled())?;
    let mut actor = policy.begin(world, episode)?;
    let mut out = EpisodeCollection {
        episode_id: episode.id,
        pairs: Vec::new(),
        log: Vec::new(),
        aborted: false,
    };
    // Returns false when the episode must end.
    let visit = |walker: &Walker<'_>, out: &mut EpisodeCollection| -> Result<bool> {
        let dm = expert.deviation(&walker.state())?;
        out.log.push((walker.state(), dm));
        match collector {
            Collector::TrustRegion => {
                if dm > cfg.tau {
                    out.aborted = true;
                    return Ok(false);
                }
                if dm > cfg.on_path_tolerance {
                    out.pairs.push(make_pair(walker, &expert, dm)?);
                }
            }
            Collector::Dagger => out.pairs.push(make_pair(walker, &expert, dm)?),
        }
        Ok(true)
    };
    if !visit(&walker, &mut out)? {
        return Ok(out);
    }
    'episode: loop {
        let feat = walker.features()?;
        let chunk = actor.chunk(&walker.state(), &feat)?;
        for &a in chunk.executable() {
            if a == Action::Stop {
                break 'episode;
            }
            let status = walker.apply(a)?;
            if status != StepStatus::Running {
                break 'episode;
            }
            if !visit(&walker, &mut out)? {
                break 'episode;
            }
        }
    }
    Ok(out)
}

fn collect(
    world: &GridWorld,
    episodes: &[Episode],
    policy: &dyn Policy,
    collector: Collector,
    checkpoint_id: &str,
    cfg: &CollectionConfig,
    rollout: &RolloutConfig,
    budget: Option<usize>,
) -> Result<CorrectionDataset> {
    cfg.validate()?;
    let mut pairs = Vec::new();
    let mut aborted = Vec::new();
    let mut failures = Vec::new();
    let mut visited = 0;
    // Episodes run in parallel batches; batch results are consumed in episode
    // order so a budget cut lands at the same pair on every run.
    let batch = if budget.is_some() {
        4 * rayon::current_num_threads().max(1)
    } else {
        episodes.len().max(1)
    };
    for group in episodes.chunks(batch) {
        if budget.is_some_and(|b| pairs.len() >= b) {
            break;
        }
        let runs: Vec<Result<EpisodeCollection>> = group
            .par_iter()
            .map(|e| collect_episode(world, e, policy, collector, cfg, rollout))
            .collect();
        for (e, run) in group.iter().zip(runs) {
            if budget.is_some_and(|b| pairs.len() >= b) {
                break;
            }
            visited += 1;
            match run {
                Ok(c) => {
                    if c.aborted {
                        aborted.push(c.episode_id);
                    }
                    pairs.extend(c.pairs);
                }
                Err(err) => failures.push(EpisodeFailure {
                    episode_id: e.id,
                    error: err.to_string(),
                }),
            }
        }
    }
    if let Some(b) = budget {
        pairs.truncate(b);
    }
    Ok(CorrectionDataset {
        schema: SCHEMA_VERSION.into(),
        pairs,
        provenance: vec![Provenance {
            collector,
            policy_checkpoint: checkpoint_id.into(),
            tau: cfg.tau,
            on_path_tolerance: cfg.on_path_tolerance,
            seeds: cfg.seeds.clone(),
            episodes: visited,
            aborted,
            failures,
            truncated_to: budget,
        }],
    })
}

/// Trust-region correction collection with per-action deviation checks.
/// Pairs are ordered by episode, then step.
pub fn collect_corrections(
    world: &GridWorld,
    episodes: &[Episode],
    policy: &dyn Policy,
    checkpoint_id: &str,
    cfg: &CollectionConfig,
    rollout: &RolloutConfig,
) -> Result<CorrectionDataset> {
    collect(
        world,
        episodes,
        policy,
        Collector::TrustRegion,
        checkpoint_id,
        cfg,
        rollout,
        None,
    )
}

/// Expert labels at every visited state, no trust region, no abort.
pub fn dagger_collect(
    world: &GridWorld,
    episodes: &[Episode],
    policy: &dyn Policy,
    checkpoint_id: &str,
    cfg: &CollectionConfig,
    rollout: &RolloutConfig,
) -> Result<CorrectionDataset> {
    collect(
        world,
        episodes,
        policy,
        Collector::Dagger,
        checkpoint_id,
        cfg,
        rollout,
        None,
    )
}

/// [`dagger_collect`] that stops once `budget` pairs exist and keeps exactly
/// the first `budget`. The pairs match a full collection cut to `budget`.
pub fn dagger_collect_budget(
    world: &GridWorld,
    episodes: &[Episode],
    policy: &dyn Policy,
    checkpoint_id: &str,
    cfg: &CollectionConfig,
    rollout: &RolloutConfig,
    budget: usize,
) -> Result<CorrectionDataset> {
    collect(
        world,
        episodes,
        policy,
        Collector::Dagger,
        checkpoint_id,
        cfg,
        rollout,
        Some(budget),
    )
}

/// Concatenate datasets in argument order.
pub fn merge(datasets: &[&CorrectionDataset]) -> Result<CorrectionDataset> {
    let mut out = CorrectionDataset::default();
    for d in datasets {
        if d.schema != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found: d.schema.clone(),
            });
        }
        out.pairs.extend(d.pairs.iter().cloned());
        out.provenance.extend(d.provenance.iter().cloned());
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, data: &CorrectionDataset, fingerprint: &str) -> Result<()> {
    let header = Header::new(CORRECTION_KIND, fingerprint)
        .with_provenance(serde_json::to_value(&data.provenance)?);
    jsonl::write(path, &header, &data.pairs)
}

pub fn read_dataset(path: &Path) -> Result<(Header, CorrectionDataset)> {
    let (header, pairs) = jsonl::read::<StateActionPair>(path, CORRECTION_KIND)?;
    let provenance: Vec<Provenance> = serde_json::from_value(header.provenance.clone())?;
    let data = CorrectionDataset {
        schema: header.schema.clone(),
        pairs,
        provenance,
    };
    Ok((header, data))
}
