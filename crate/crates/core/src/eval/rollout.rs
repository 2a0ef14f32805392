use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{Frame, MemoryMode, RefineParams, StreamState};
use crate::policy::{featurize, FeatureVector, Reward};
use crate::world::{
    observe, step, Action, ActuationNoise, AgentState, DistanceField, Episode, GridWorld,
};

/// Knobs shared by every rollout loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub t_max: u64,
    /// Consecutive blocked forward moves that end an episode as a failure.
    pub stall_limit: u32,
    pub memory_mode: MemoryMode,
    pub refine: RefineParams,
    pub reward: Reward,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            t_max: 500,
            stall_limit: 20,
            memory_mode: MemoryMode::Amr,
            refine: RefineParams::default(),
            reward: Reward::default(),
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::InvalidParams("t_max must be positive".into()));
        }
        if self.stall_limit == 0 {
            return Err(Error::InvalidParams("stall_limit must be positive".into()));
        }
        self.refine.validate()?;
        self.reward.validate()
    }

    pub fn with_mode(&self, memory_mode: MemoryMode) -> Self {
        RolloutConfig {
            memory_mode,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Running,
    Stalled,
    TimeUp,
}

/// Agent state, memory and bookkeeping for one episode.
#[derive(Debug)]
pub struct Walker<'a> {
    pub world: &'a GridWorld,
    pub episode: &'a Episode,
    cfg: &'a RolloutConfig,
    memory: StreamState,
    state: AgentState,
    current: Frame,
    noise: ActuationNoise,
    /// Non-STOP actions executed so far; also the current frame's timestamp.
    t: u64,
    stalled: u32,
    path: Vec<AgentState>,
    length: f64,
}

impl<'a> Walker<'a> {
    pub fn new(
        world: &'a GridWorld,
        episode: &'a Episode,
        cfg: &'a RolloutConfig,
        noise: ActuationNoise,
    ) -> Result<Self> {
        let state = episode.start;
        let current = observe(world, &state, 0);
        let mut memory = StreamState::new(cfg.refine.k);
        memory.update(
            cfg.memory_mode,
            current.clone(),
            &episode.instruction.embedding,
            &cfg.refine,
        )?;
        Ok(Walker {
            world,
            episode,
            cfg,
            memory,
            state,
            current,
            noise,
            t: 0,
            stalled: 0,
            path: vec![state],
            length: 0.0,
        })
    }

    pub fn state(&self) -> AgentState {
        self.state
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn frame(&self) -> &Frame {
        &self.current
    }

    pub fn memory(&self) -> &StreamState {
        &self.memory
    }

    pub fn path(&self) -> &[AgentState] {
        &self.path
    }

    pub fn into_path(self) -> Vec<AgentState> {
        self.path
    }

    pub fn path_length(&self) -> f64 {
        self.length
    }

    pub fn bank_timestamps(&self) -> Vec<u64> {
        self.memory.bank().timestamps()
    }

    pub fn features(&self) -> Result<FeatureVector> {
        featurize(
            &self.episode.instruction.embedding,
            self.memory.bank(),
            self.memory.recent(),
            &self.current,
            self.t,
            self.cfg.t_max,
        )
    }

    /// Execute one non-STOP action, observe, and update memory.
    pub fn apply(&mut self, action: Action) -> Result<StepStatus> {
        debug_assert_ne!(action, Action::Stop);
        let next = step(self.world, self.state, action, &mut self.noise);
        if action == Action::MoveForward && next == self.state {
            self.stalled += 1;
        } else if action == Action::MoveForward {
            self.stalled = 0;
        }
        self.length += self.state.distance_to(next.position());
        self.state = next;
        self.t += 1;
        self.path.push(next);
        self.current = observe(self.world, &next, self.t);
        self.memory.update(
            self.cfg.memory_mode,
            self.current.clone(),
            &self.episode.instruction.embedding,
            &self.cfg.refine,
        )?;
        Ok(if self.stalled >= self.cfg.stall_limit {
            StepStatus::Stalled
        } else if self.t >= self.cfg.t_max {
            StepStatus::TimeUp
        } else {
            StepStatus::Running
        })
    }
}

/// Geodesic distance to the episode goal from any free cell.
pub fn goal_field(world: &GridWorld, episode: &Episode) -> Result<DistanceField> {
    let (x, y) = episode.goal;
    let cell = world
        .free_cell_of(x, y)
        .ok_or(Error::InvalidPoint { x, y })?;
    Ok(world.distance_field(&[cell]))
}

pub(crate) fn field_at(world: &GridWorld, field: &DistanceField, s: &AgentState) -> Result<f64> {
    field
        .at_point(world, s.x, s.y)
        .ok_or(Error::StateInObstacle { x: s.x, y: s.y })
}
