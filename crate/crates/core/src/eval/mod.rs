//! Episode rollouts and navigation metrics.

mod metrics;
mod report;
mod rollout;

pub use metrics::{
    compute_metrics, dtw, ndtw, ndtw_with, EpisodeResult, MetricsReport, ReferenceFields,
};
pub use report::{
    read_results, read_traces, table_markdown, write_csv, write_markdown, write_results,
    write_traces, ReportRow, TraceStep, RESULTS_KIND, TRACE_KIND,
};
pub use rollout::{goal_field, RolloutConfig, StepStatus, Walker};

use rayon::prelude::*;

use crate::error::Result;
use crate::policy::Policy;
use crate::world::{Action, ActuationNoise, Episode, GridWorld};

/// Roll out `policy` on `episode` with actuation noise off.
pub fn run_episode(
    world: &GridWorld,
    episode: &Episode,
    policy: &dyn Policy,
    cfg: &RolloutConfig,
) -> Result<EpisodeResult> {
    run(world, episode, policy, cfg, None)
}

/// [`run_episode`] that also records one [`TraceStep`] per executed action.
pub fn run_episode_traced(
    world: &GridWorld,
    episode: &Episode,
    policy: &dyn Policy,
    cfg: &RolloutConfig,
) -> Result<(EpisodeResult, Vec<TraceStep>)> {
    let mut trace = Vec::new();
    let r = run(world, episode, policy, cfg, Some(&mut trace))?;
    Ok((r, trace))
}

fn run(
    world: &GridWorld,
    episode: &Episode,
    policy: &dyn Policy,
    cfg: &RolloutConfig,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let radius = world.params.success_radius;
    let goal = goal_field(world, episode)?;
    let mut walker = Walker::new(world, episode, cfg, ActuationNoise::disabled())?;
    let mut actor = policy.begin(world, episode)?;
    let mut min_goal = rollout::field_at(world, &goal, &walker.state())?;
    let mut stopped = false;
    'episode: loop {
        let feat = walker.features()?;
        let chunk = actor.chunk(&walker.state(), &feat)?;
        for &a in chunk.executable() {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceStep::new(episode.id, &walker, a));
            }
            if a == Action::Stop {
                stopped = true;
                break 'episode;
            }
            let status = walker.apply(a)?;
            min_goal = min_goal.min(rollout::field_at(world, &goal, &walker.state())?);
            if status != StepStatus::Running {
                break 'episode;
            }
        }
    }
    let final_goal = rollout::field_at(world, &goal, &walker.state())?;
    let success = stopped && final_goal <= radius;
    let steps = walker.t() + u64::from(stopped);
    let fields = ReferenceFields::new(world, &episode.expert_path)?;
    let ndtw = ndtw_with(world, walker.path(), &fields, radius)?;
    Ok(EpisodeResult {
        episode_id: episode.id,
        success,
        stopped,
        stop_geodesic_to_goal: final_goal,
        agent_path_length: walker.path_length(),
        shortest_length: episode.shortest_geodesic_length,
        steps_taken: steps,
        min_goal_distance_along_path: min_goal,
        ndtw,
        cumulative_return: cfg.reward.episode_return(steps as usize, success),
        agent_path: walker.into_path(),
    })
}

/// Evaluate every episode in parallel; results keep the input order.
pub fn evaluate(
    world: &GridWorld,
    episodes: &[Episode],
    policy: &dyn Policy,
    cfg: &RolloutConfig,
) -> Result<Vec<EpisodeResult>> {
    episodes
        .par_iter()
        .map(|e| run_episode(world, e, policy, cfg))
        .collect()
}

/// Parallel [`run_episode_traced`] over all episodes.
pub fn evaluate_traced(
    world: &GridWorld,
    episodes: &[Episode],
    policy: &dyn Policy,
    cfg: &RolloutConfig,
) -> Result<(Vec<EpisodeResult>, Vec<TraceStep>)> {
    let runs: Vec<(EpisodeResult, Vec<TraceStep>)> = episodes
        .par_iter()
        .map(|e| run_episode_traced(world, e, policy, cfg))
        .collect::<Result<_>>()?;
    let mut results = Vec::with_capacity(runs.len());
    let mut traces = Vec::new();
    for (r, t) in runs {
        results.push(r);
        traces.extend(t);
    }
    Ok((results, traces))
}
